"""Numeric kernels with a compiled fast path and a pure-Python fallback.

The compiled extension is selected at import when available; set
BALSIM_PURE_KERNELS=1 to force the fallback. Both backends implement the
same functions with identical numeric results.
"""

import os

import numpy as np

from . import _pure

if os.environ.get("BALSIM_PURE_KERNELS"):
    _impl = _pure
    _BACKEND = "pure"
else:
    try:
        from . import _compiled as _impl
        _BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        _BACKEND = "pure"


def backend() -> str:
    """Name of the active kernel backend: "compiled" or "pure"."""
    return _BACKEND


def _i64(values) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.int64)


def sum_pair_counts(lengths) -> int:
    """Total causal attention pairs over documents of the given lengths."""
    return int(_impl.sum_pair_counts(_i64(lengths)))


def range_pair_sum(starts, ends) -> int:
    """Causal pairs covered by half-open token ranges [start, end)."""
    return int(_impl.range_pair_sum(_i64(starts), _i64(ends)))


def kernel_latency_sum(q_lens, kv_lens, tile: int, curve_q, curve_v,
                       op_scale: float) -> float:
    """Summed tile-padded attention kernel latency over (q, kv) pairs."""
    return float(_impl.kernel_latency_sum(
        _i64(q_lens), _i64(kv_lens), tile, _i64(curve_q),
        np.ascontiguousarray(curve_v, dtype=np.float64), op_scale))


def heuristic_fill(lengths, n_mb: int, l_max: int, attn_coeff: float,
                   linear_coeff: float) -> np.ndarray:
    """Min-latency bin placement for descending-length documents.

    Returns an int32 array of bin indices, -1 for documents that fit in
    no bin under the l_max cap.
    """
    return _impl.heuristic_fill(_i64(lengths), n_mb, l_max,
                                attn_coeff, linear_coeff)
