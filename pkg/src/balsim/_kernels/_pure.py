"""Pure-Python kernel implementations.

Reference semantics for the compiled extension in _compiled.pyx; the two
must stay in lockstep (the cross-backend tests assert exact equality,
including float results, so keep arithmetic expression order identical).
"""

import numpy as np


def sum_pair_counts(lengths):
    """Total causal attention pairs for documents of the given lengths.

    A document of length d contributes d*(d+1)//2 key/query pairs under a
    block-diagonal causal mask.
    """
    if hasattr(lengths, "tolist"):
        lengths = lengths.tolist()
    total = 0
    for d in lengths:
        total += d * (d + 1) // 2
    return total


def range_pair_sum(starts, ends):
    """Causal pairs covered by half-open token ranges within documents.

    Token at position k attends to k+1 keys, so a range [s, e) contributes
    sum_{k=s}^{e-1} (k+1) = (e*(e+1) - s*(s+1)) // 2.
    """
    if hasattr(starts, "tolist"):
        starts = starts.tolist()
    if hasattr(ends, "tolist"):
        ends = ends.tolist()
    total = 0
    for s, e in zip(starts, ends):
        total += (e * (e + 1) - s * (s + 1)) // 2
    return total


def kernel_latency_sum(q_lens, kv_lens, tile, curve_q, curve_v, op_scale):
    """Summed tile-padded kernel latency over (q_len, kv_len) pairs.

    Each query block is padded up to a multiple of `tile`; achieved
    throughput is a piecewise-constant function of the unpadded q_len
    given by breakpoints (curve_q, curve_v) with curve_q[0] == 0.
    """
    if hasattr(q_lens, "tolist"):
        q_lens = q_lens.tolist()
    if hasattr(kv_lens, "tolist"):
        kv_lens = kv_lens.tolist()
    if hasattr(curve_q, "tolist"):
        curve_q = curve_q.tolist()
    if hasattr(curve_v, "tolist"):
        curve_v = curve_v.tolist()
    nseg = len(curve_q)
    total = 0.0
    for q, kv in zip(q_lens, kv_lens):
        if q == 0:
            continue
        j = nseg - 1
        while j > 0 and curve_q[j] > q:
            j -= 1
        padded = ((q + tile - 1) // tile) * tile
        total += op_scale * (padded * kv) / curve_v[j]
    return total


def heuristic_fill(lengths, n_mb, l_max, attn_coeff, linear_coeff):
    """Place documents (pre-sorted by descending length) into n_mb bins.

    Each document goes to the bin with the lowest modeled latency
    (attn_coeff * pair count + linear_coeff * token count) if it fits
    within l_max, else to the shortest bin that fits, else it is left
    unplaced (-1). Ties always resolve to the lowest bin index.
    """
    if hasattr(lengths, "tolist"):
        lengths = lengths.tolist()
    mb_len = [0] * n_mb
    mb_pairs = [0] * n_mb
    out = np.empty(len(lengths), dtype=np.int32)
    for i, d in enumerate(lengths):
        w_idx = 0
        best = attn_coeff * mb_pairs[0] + linear_coeff * mb_len[0]
        for j in range(1, n_mb):
            w = attn_coeff * mb_pairs[j] + linear_coeff * mb_len[j]
            if w < best:
                best = w
                w_idx = j
        if mb_len[w_idx] + d <= l_max:
            target = w_idx
        else:
            l_idx = 0
            for j in range(1, n_mb):
                if mb_len[j] < mb_len[l_idx]:
                    l_idx = j
            if mb_len[l_idx] + d <= l_max:
                target = l_idx
            else:
                out[i] = -1
                continue
        mb_len[target] += d
        mb_pairs[target] += d * (d + 1) // 2
        out[i] = target
    return out
