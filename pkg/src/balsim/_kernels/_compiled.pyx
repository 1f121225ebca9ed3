# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Mirrors _pure.py; keep the two in lockstep.

Expression order matters: cross-backend tests assert exact float
equality, so arithmetic here must round identically to the fallback.
"""

import numpy as np


def sum_pair_counts(long long[::1] lengths):
    cdef Py_ssize_t i
    cdef long long d, total = 0
    for i in range(lengths.shape[0]):
        d = lengths[i]
        total += d * (d + 1) // 2
    return total


def range_pair_sum(long long[::1] starts, long long[::1] ends):
    cdef Py_ssize_t i
    cdef long long s, e, total = 0
    for i in range(starts.shape[0]):
        s = starts[i]
        e = ends[i]
        total += (e * (e + 1) - s * (s + 1)) // 2
    return total


def kernel_latency_sum(long long[::1] q_lens, long long[::1] kv_lens,
                       long long tile, long long[::1] curve_q,
                       double[::1] curve_v, double op_scale):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t nseg = curve_q.shape[0]
    cdef long long q, kv, padded
    cdef double total = 0.0
    for i in range(q_lens.shape[0]):
        q = q_lens[i]
        if q == 0:
            continue
        kv = kv_lens[i]
        j = nseg - 1
        while j > 0 and curve_q[j] > q:
            j -= 1
        padded = ((q + tile - 1) // tile) * tile
        total += op_scale * <double>(padded * kv) / curve_v[j]
    return total


def heuristic_fill(long long[::1] lengths, int n_mb, long long l_max,
                   double attn_coeff, double linear_coeff):
    cdef Py_ssize_t i, n = lengths.shape[0]
    cdef int j, w_idx, l_idx, target
    cdef long long d
    cdef double w, best
    mb_len_arr = np.zeros(n_mb, dtype=np.int64)
    mb_pairs_arr = np.zeros(n_mb, dtype=np.int64)
    out_arr = np.empty(n, dtype=np.int32)
    cdef long long[::1] mb_len = mb_len_arr
    cdef long long[::1] mb_pairs = mb_pairs_arr
    cdef int[::1] out = out_arr
    for i in range(n):
        d = lengths[i]
        w_idx = 0
        best = attn_coeff * <double>mb_pairs[0] + linear_coeff * <double>mb_len[0]
        for j in range(1, n_mb):
            w = attn_coeff * <double>mb_pairs[j] + linear_coeff * <double>mb_len[j]
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
    return out_arr
