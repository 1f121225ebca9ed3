"""Shared fixtures and independent reference oracles.

The oracles here are deliberately brute-force (full enumeration, direct
summation) and share no code with the library paths they check.
"""

import numpy as np
import pytest

from balsim.workload import Document


def enum_min_max_sq(lengths, m, cap):
    """Exhaustive min over assignments of the max per-bin sum of d^2.

    Documents open bins in first-touch order (canonical set partitions
    into <= m parts), so only capacity-infeasible branches are cut.
    Returns None when no assignment fits.
    """
    n = len(lengths)
    sq = [d * d for d in lengths]
    best = [None]
    bin_len = [0] * m
    bin_sq = [0] * m

    def rec(k, used, cur_max):
        if k == n:
            if best[0] is None or cur_max < best[0]:
                best[0] = cur_max
            return
        d, s = lengths[k], sq[k]
        top = used + 1 if used < m else m
        for j in range(top):
            if bin_len[j] + d > cap:
                continue
            bin_len[j] += d
            bin_sq[j] += s
            rec(k + 1, max(used, j + 1), max(cur_max, bin_sq[j]))
            bin_len[j] -= d
            bin_sq[j] -= s

    rec(0, 0, 0)
    return best[0]


def enum_min_max_latency(lengths, m, l_max, profile):
    """Exhaustive min-max modeled latency; empty bins still pay the
    constant overhead. Returns None when no assignment fits."""
    n = len(lengths)
    wts = [profile.attn_coeff * (d * (d + 1) // 2) for d in lengths]
    best = [None]
    bin_len = [0] * m
    bin_wt = [0.0] * m

    def rec(k, used, cur_max):
        if k == n:
            if best[0] is None or cur_max < best[0]:
                best[0] = cur_max
            return
        d, w = lengths[k], wts[k]
        top = used + 1 if used < m else m
        for j in range(top):
            if bin_len[j] + d > l_max:
                continue
            bin_len[j] += d
            bin_wt[j] += w
            obj = bin_wt[j] + profile.linear_coeff * bin_len[j] + profile.linear_const
            rec(k + 1, max(used, j + 1), max(cur_max, obj))
            bin_len[j] -= d
            bin_wt[j] -= w

    rec(0, 0, profile.linear_const)
    return best[0]


def range_pairs(start, end):
    """Causal pairs of [start, end): token k attends to k+1 keys."""
    return sum(k + 1 for k in range(start, end))


def make_docs(lengths, arrival=0, first_id=0):
    return [Document(first_id + i, l, arrival) for i, l in enumerate(lengths)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
