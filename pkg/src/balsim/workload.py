"""Domain types and the analytic cost model.

Workload accounting is exact: a document of length d under a causal,
block-diagonal attention mask costs d*(d+1)//2 query/key pairs, and pair
counts add across documents and across disjoint token ranges. Latency is
a calibrated linear projection on top of those counts:

    linear ops over x tokens   W_l(x) = linear_coeff * x + linear_const
    attention over documents   W_a    = attn_coeff * pair_count

A separate tile-padded kernel model (`attention_kernel_latency`) captures
what the pair-count projection cannot: query blocks are padded to the
tile size, and achieved throughput is a step function of the unpadded
query length. That model drives the context-parallel sharding choice.

Default profile constants are calibration values, not measurements. They
are chosen so that linear ops dominate short documents and attention
dominates past a crossover of roughly 20K tokens, and so that the kernel
model agrees with the pair-count projection for long tile-aligned spans
(op_scale == attn_coeff * top_throughput / 2).
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import asdict, dataclass, field

from . import _kernels
from .errors import ConfigError


@dataclass(frozen=True)
class TokenRange:
    """Half-open token span [start, end) inside one document."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid token range [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Document:
    """A document in the training stream.

    Splitting at a capacity boundary produces pieces that keep the id of
    the original document; negative ids are reserved for synthetic
    alignment filler.
    """

    id: int
    length: int
    arrival_batch: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"document length must be >= 1, got {self.length}")
        if self.arrival_batch < 0:
            raise ValueError("arrival_batch must be >= 0")


@dataclass
class MicroBatch:
    """Ordered documents packed into one variable-length sequence."""

    docs: list[Document] = field(default_factory=list)

    @property
    def total_length(self) -> int:
        return sum(d.length for d in self.docs)

    def lengths(self) -> list[int]:
        return [d.length for d in self.docs]


@dataclass(frozen=True)
class ParallelismConfig:
    """Degrees of the 4D layout plus batch geometry.

    tp is carried for bookkeeping only: the cost profile coefficients are
    assumed to be calibrated for the tensor-parallel degree in use.
    """

    context_window: int
    microbatches_per_step: int = 4
    tp: int = 1
    cp: int = 1
    pp: int = 1
    dp: int = 1

    def __post_init__(self):
        for name in ("context_window", "microbatches_per_step",
                     "tp", "cp", "pp", "dp"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.context_window % (2 * self.cp) != 0:
            raise ConfigError(
                f"context_window {self.context_window} must be divisible "
                f"by 2*cp = {2 * self.cp}")


_PROFILE_SCHEMA = "balsim.profile.v1"


@dataclass(frozen=True)
class CostProfile:
    """Calibration constants for the latency projections.

    tflops_curve is a piecewise-constant throughput lookup: breakpoints
    (q_len_threshold, achieved_throughput), thresholds strictly
    increasing and starting at 0. The default curve steps up at q=256,
    where wider query blocks start amortizing memory traffic.
    """

    attn_coeff: float = 2.0e-10
    linear_coeff: float = 2.0e-6
    linear_const: float = 2.0e-3
    tile_size: int = 128
    tflops_curve: tuple[tuple[int, float], ...] = ((0, 3.5e11), (256, 7.0e11))
    peak_throughput: float = 1.0e12
    op_scale: float = 70.0
    backward_ratio: float = 2.0

    def __post_init__(self):
        for name in ("attn_coeff", "linear_coeff", "linear_const"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.tile_size < 1:
            raise ConfigError("tile_size must be >= 1")
        if self.op_scale <= 0 or self.backward_ratio <= 0:
            raise ConfigError("op_scale and backward_ratio must be > 0")
        curve = tuple((int(q), float(v)) for q, v in self.tflops_curve)
        if not curve or curve[0][0] != 0:
            raise ConfigError("tflops_curve must start at threshold 0")
        prev = -1
        for q, v in curve:
            if q <= prev:
                raise ConfigError("tflops_curve thresholds must increase")
            if not 0 < v <= self.peak_throughput:
                raise ConfigError(
                    "curve throughput must be positive and <= peak_throughput")
            prev = q
        object.__setattr__(self, "tflops_curve", curve)

    def throughput(self, q_len: int) -> float:
        """Achieved throughput for an unpadded query length."""
        qs = [q for q, _ in self.tflops_curve]
        return self.tflops_curve[bisect_right(qs, q_len) - 1][1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tflops_curve"] = [list(p) for p in self.tflops_curve]
        d["schema"] = _PROFILE_SCHEMA
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CostProfile":
        data = dict(data)
        schema = data.pop("schema", _PROFILE_SCHEMA)
        if schema != _PROFILE_SCHEMA:
            raise ConfigError(f"unsupported profile schema {schema!r}")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown profile keys: {sorted(unknown)}")
        if "tflops_curve" in data:
            data["tflops_curve"] = tuple(tuple(p) for p in data["tflops_curve"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_file(cls, path) -> "CostProfile":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read profile {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in profile {path}: {exc}") from exc
        return cls.from_dict(data)


def attention_workload(doc_lengths) -> int:
    """Exact causal pair count over documents: sum of d*(d+1)//2."""
    return _kernels.sum_pair_counts(list(doc_lengths))


def range_attention_workload(doc_length: int, token_range: TokenRange) -> int:
    """Pair count of one token range: token k attends to k+1 keys.

    The range must lie within [0, doc_length).
    """
    if token_range.end > doc_length:
        raise ValueError(
            f"range end {token_range.end} exceeds document length {doc_length}")
    s, e = token_range.start, token_range.end
    return (e * (e + 1) - s * (s + 1)) // 2


def linear_workload_latency(total_tokens: int, profile: CostProfile) -> float:
    """Latency of the token-count-proportional ops (MLP, norms, P2P)."""
    if total_tokens < 0:
        raise ValueError("total_tokens must be >= 0")
    return profile.linear_coeff * total_tokens + profile.linear_const


def attention_workload_latency(doc_lengths, profile: CostProfile) -> float:
    """Pair-count-proportional attention latency over whole documents."""
    return profile.attn_coeff * attention_workload(doc_lengths)


def microbatch_latency(mb: MicroBatch, profile: CostProfile) -> float:
    """Modeled per-micro-batch compute latency W_a + W_l."""
    return latency_of_lengths(mb.lengths(), profile)


def latency_of_lengths(doc_lengths, profile: CostProfile) -> float:
    """microbatch_latency on raw lengths; empty input costs linear_const."""
    lengths = list(doc_lengths)
    pairs = _kernels.sum_pair_counts(lengths)
    total = sum(lengths)
    return (profile.attn_coeff * pairs
            + profile.linear_coeff * total + profile.linear_const)


def attention_kernel_latency(q_len: int, kv_len: int,
                             profile: CostProfile) -> float:
    """Tile-padded kernel latency for one query block against kv_len keys.

    The query block pads up to a multiple of tile_size; throughput is
    looked up on the unpadded q_len. A zero-length query costs nothing;
    a nonzero query against zero keys is an error.
    """
    if q_len < 0 or kv_len < 0:
        raise ValueError("q_len and kv_len must be >= 0")
    if q_len == 0:
        return 0.0
    if kv_len == 0:
        raise ValueError("kv_len must be >= 1 when q_len > 0")
    tile = profile.tile_size
    padded = ((q_len + tile - 1) // tile) * tile
    return profile.op_scale * (padded * kv_len) / profile.throughput(q_len)
