"""Context-parallel sharding of packed micro-batches.

Two strategies split a micro-batch across cp workers in 2*cp chunks with
symmetric pairing (worker i takes chunks i and 2*cp-1-i), which balances
causal attention load:

* per-sequence: chunks cut the concatenated sequence, then are
  re-expressed per document. Zero padding, but multi-document batches
  can leave workers with very unequal attention work.
* per-document: every document is chunked independently; leftover tokens
  shorter than a chunk are taken from the document tail, pooled, and
  dealt round-robin one token at a time so worker token counts stay
  equal. Balanced by construction, but the small fragments waste tile
  compute in the kernel model.

`adaptive_select` evaluates both under the tile-padded kernel model and
keeps the cheaper one, preferring per-sequence on ties.

Attention within a range is modeled as the query block attending to the
full causal prefix of its document (all-gathered keys/values), so a
range [s, e) costs a kernel call with q_len = e - s and kv_len = e.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .workload import CostProfile, MicroBatch, TokenRange


class ShardStrategy(str, enum.Enum):
    PER_SEQUENCE = "per_sequence"
    PER_DOCUMENT = "per_document"

    def __str__(self) -> str:
        return self.value


@dataclass
class ShardAssignment:
    """Per-worker token ranges for one micro-batch.

    Ranges are keyed by document position within the micro-batch (ids may
    repeat when a packer split a document) and kept in canonical form:
    sorted by (position, start) with adjacent spans merged.
    """

    strategy: ShardStrategy
    cp: int
    doc_ids: list[int]
    doc_lengths: list[int]
    workers: list[list[tuple[int, TokenRange]]] = field(default_factory=list)

    def worker_token_count(self, worker: int) -> int:
        return sum(len(r) for _, r in self.workers[worker])


def _canonical(entries: list[tuple[int, int, int]]) -> list[tuple[int, TokenRange]]:
    """Sort raw (pos, start, end) spans and merge adjacent ones."""
    entries.sort()
    merged: list[tuple[int, TokenRange]] = []
    for pos, start, end in entries:
        if merged:
            prev_pos, prev = merged[-1]
            if prev_pos == pos and prev.end == start:
                merged[-1] = (pos, TokenRange(prev.start, end))
                continue
        merged.append((pos, TokenRange(start, end)))
    return merged


def _check_divisible(total: int, cp: int) -> None:
    if cp < 1:
        raise ValueError("cp must be >= 1")
    if total % (2 * cp) != 0:
        raise ValueError(
            f"micro-batch length {total} not divisible by 2*cp = {2 * cp}; "
            "pad with a filler document first")


def per_sequence_shard(mb: MicroBatch, cp: int) -> ShardAssignment:
    """Cut the concatenated sequence into 2*cp chunks, pair symmetrically."""
    lengths = mb.lengths()
    total = sum(lengths)
    _check_divisible(total, cp)
    assignment = ShardAssignment(
        strategy=ShardStrategy.PER_SEQUENCE, cp=cp,
        doc_ids=[d.id for d in mb.docs], doc_lengths=lengths)
    chunk = total // (2 * cp)
    starts = [0]
    for length in lengths:
        starts.append(starts[-1] + length)
    for worker in range(cp):
        raw: list[tuple[int, int, int]] = []
        if chunk:
            for c in (worker, 2 * cp - 1 - worker):
                lo, hi = c * chunk, (c + 1) * chunk
                # walk documents overlapping the global span [lo, hi)
                for pos, length in enumerate(lengths):
                    dlo, dhi = starts[pos], starts[pos + 1]
                    if dhi <= lo or dlo >= hi:
                        continue
                    raw.append((pos, max(lo, dlo) - dlo, min(hi, dhi) - dlo))
        assignment.workers.append(_canonical(raw))
    return assignment


def per_document_shard(mb: MicroBatch, cp: int) -> ShardAssignment:
    """Chunk every document independently; deal tail remainders per token.

    Remainder tokens (the last length mod 2*cp tokens of each document)
    are pooled across documents and assigned round-robin with a running
    cursor, so every worker ends with exactly total/cp tokens.
    """
    lengths = mb.lengths()
    total = sum(lengths)
    _check_divisible(total, cp)
    assignment = ShardAssignment(
        strategy=ShardStrategy.PER_DOCUMENT, cp=cp,
        doc_ids=[d.id for d in mb.docs], doc_lengths=lengths)
    raws: list[list[tuple[int, int, int]]] = [[] for _ in range(cp)]
    cursor = 0
    for pos, length in enumerate(lengths):
        d = length // (2 * cp)
        if d:
            for worker in range(cp):
                for c in (worker, 2 * cp - 1 - worker):
                    raws[worker].append((pos, c * d, (c + 1) * d))
        tail_start = 2 * cp * d
        for k in range(length - tail_start):
            raws[(cursor + k) % cp].append(
                (pos, tail_start + k, tail_start + k + 1))
        cursor += length - tail_start
    for worker in range(cp):
        assignment.workers.append(_canonical(raws[worker]))
    return assignment


@lru_cache(maxsize=None)
def _curve_arrays(profile: CostProfile):
    qs = np.array([q for q, _ in profile.tflops_curve], dtype=np.int64)
    vs = np.array([v for _, v in profile.tflops_curve], dtype=np.float64)
    return qs, vs


def worker_attention_latency(assignment: ShardAssignment, worker: int,
                             profile: CostProfile) -> float:
    """Tile-padded kernel latency of one worker's ranges."""
    ranges = assignment.workers[worker]
    if not ranges:
        return 0.0
    q = np.array([r.end - r.start for _, r in ranges], dtype=np.int64)
    kv = np.array([r.end for _, r in ranges], dtype=np.int64)
    qs, vs = _curve_arrays(profile)
    return _kernels.kernel_latency_sum(q, kv, profile.tile_size, qs, vs,
                                       profile.op_scale)


def group_attention_latency(assignment: ShardAssignment,
                            profile: CostProfile) -> float:
    """Latency of the synchronized group: the slowest worker."""
    return max(worker_attention_latency(assignment, w, profile)
               for w in range(assignment.cp))


def strategy_latencies(mb: MicroBatch, cp: int,
                       profile: CostProfile) -> dict[ShardStrategy, float]:
    """Group latency of both strategies under the kernel model."""
    return {
        ShardStrategy.PER_SEQUENCE:
            group_attention_latency(per_sequence_shard(mb, cp), profile),
        ShardStrategy.PER_DOCUMENT:
            group_attention_latency(per_document_shard(mb, cp), profile),
    }


def adaptive_select(mb: MicroBatch, cp: int,
                    profile: CostProfile) -> ShardAssignment:
    """Pick the cheaper strategy for this micro-batch; ties go per-sequence."""
    lats = strategy_latencies(mb, cp, profile)
    if lats[ShardStrategy.PER_SEQUENCE] <= lats[ShardStrategy.PER_DOCUMENT]:
        return per_sequence_shard(mb, cp)
    return per_document_shard(mb, cp)


def shard(mb: MicroBatch, cp: int, policy: str,
          profile: CostProfile) -> ShardAssignment:
    """Dispatch on a sharding policy name, including "adaptive"."""
    if policy == "adaptive":
        return adaptive_select(mb, cp, profile)
    if policy == ShardStrategy.PER_SEQUENCE.value:
        return per_sequence_shard(mb, cp)
    if policy == ShardStrategy.PER_DOCUMENT.value:
        return per_document_shard(mb, cp)
    raise ValueError(f"unknown sharding policy {policy!r}")
