"""Document packing strategies and balance metrics.

Fixed-length packers fill micro-batches to exactly the context window
(splitting documents at capacity boundaries); variable-length packers
keep documents whole under a looser l_max cap and balance modeled
latency instead of raw token counts. The streaming heuristic additionally
delays outlier documents in FIFO length-bucketed queues until enough
similar-sized ones accumulate to give every micro-batch of an iteration
one of them.

Exact packers solve the min-max assignment by branch and bound and are
meant as small-instance oracles, not production paths.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, InfeasibleError, OracleLimitError
from .workload import CostProfile, Document, MicroBatch, latency_of_lengths

_EXACT_DOC_LIMIT = 20


@dataclass
class PackingPlan:
    """Result of packing one iteration's documents.

    delayed_tokens maps document id to the delay, in global batches,
    between arrival and consumption. carried_over lists documents held
    for a later iteration (not yet trainable).
    """

    iteration: int
    microbatches: list[MicroBatch]
    carried_over: list[Document] = field(default_factory=list)
    delayed_tokens: dict[int, int] = field(default_factory=dict)


class OutlierQueueSet:
    """FIFO delay queues bucketed by ascending length thresholds.

    A document is an outlier when its length reaches the first threshold;
    it joins the bucket [L_i, L_{i+1}) for its length, the last bucket
    being unbounded.
    """

    def __init__(self, thresholds):
        thresholds = [int(t) for t in thresholds]
        if not thresholds:
            raise ConfigError("at least one queue threshold is required")
        if any(t < 1 for t in thresholds) or sorted(set(thresholds)) != thresholds:
            raise ConfigError("queue thresholds must be positive and increasing")
        self.thresholds = tuple(thresholds)
        self.queues: list[deque[Document]] = [deque() for _ in thresholds]

    def is_outlier(self, doc: Document) -> bool:
        return doc.length >= self.thresholds[0]

    def push(self, doc: Document) -> None:
        if not self.is_outlier(doc):
            raise ValueError("document below the first outlier threshold")
        idx = 0
        for i, t in enumerate(self.thresholds):
            if doc.length >= t:
                idx = i
        self.queues[idx].append(doc)

    def pop_ready(self, n: int) -> list[Document]:
        """Pop exactly n documents from every queue that has at least n."""
        popped: list[Document] = []
        for q in self.queues:
            if len(q) >= n:
                popped.extend(q.popleft() for _ in range(n))
        return popped

    def drain(self) -> list[Document]:
        drained: list[Document] = []
        for q in self.queues:
            drained.extend(q)
            q.clear()
        return drained

    def depths(self) -> list[int]:
        return [len(q) for q in self.queues]

    def __len__(self) -> int:
        return sum(len(q) for q in self.queues)


def _delay(iteration: int, doc: Document) -> int:
    return max(0, iteration - doc.arrival_batch)


class BaselinePacker:
    """Stateful sequential packer: fill to the window, split at boundaries.

    The truncated tail of a boundary document returns to the front of the
    stream as a piece with the same id. feed() emits the micro-batches
    completed by one global batch; flush() emits the final partial one.
    """

    def __init__(self, context_window: int, microbatches_per_step: int):
        self.window = context_window
        self.n = microbatches_per_step
        self._open: list[Document] = []
        self._used = 0

    def _fill(self, docs) -> list[MicroBatch]:
        done: list[MicroBatch] = []
        stream = deque(docs)
        while stream:
            doc = stream.popleft()
            space = self.window - self._used
            if doc.length < space:
                self._open.append(doc)
                self._used += doc.length
            else:
                head = doc if doc.length == space else Document(
                    doc.id, space, doc.arrival_batch)
                self._open.append(head)
                done.append(MicroBatch(self._open))
                self._open, self._used = [], 0
                if doc.length > space:
                    stream.appendleft(
                        Document(doc.id, doc.length - space, doc.arrival_batch))
        return done

    def feed(self, docs, iteration: int) -> PackingPlan:
        mbs = self._fill(docs)
        delays = {d.id: _delay(iteration, d) for mb in mbs for d in mb.docs}
        return PackingPlan(iteration, mbs, carried_over=list(self._open),
                           delayed_tokens=delays)

    def flush(self, iteration: int) -> list[PackingPlan]:
        if not self._open:
            return []
        mb = MicroBatch(self._open)
        self._open, self._used = [], 0
        delays = {d.id: _delay(iteration, d) for d in mb.docs}
        return [PackingPlan(iteration, [mb], delayed_tokens=delays)]


def baseline_sequential_pack(stream, context_window: int) -> PackingPlan:
    """One-shot sequential pack of a whole stream (final piece included)."""
    packer = BaselinePacker(context_window, 1)
    plan = packer.feed(list(stream), 0)
    for tail in packer.flush(0):
        plan.microbatches.extend(tail.microbatches)
        plan.delayed_tokens.update(tail.delayed_tokens)
    plan.carried_over = []
    return plan


def fixed_len_greedy_pack(docs, m: int, context_window: int) -> PackingPlan:
    """Longest-first placement into the least-loaded of M fixed windows.

    Documents go whole into the micro-batch with the smallest attention
    pair count among those with remaining capacity; a document that
    overflows its target is split at the boundary and the tail re-enters
    the length-sorted stream. Requires total tokens == M * window (pad
    the stream with filler documents first).
    """
    docs = list(docs)
    total = sum(d.length for d in docs)
    if total != m * context_window:
        raise InfeasibleError(
            f"stream totals {total} tokens, fixed-length packing needs "
            f"exactly M*L = {m * context_window}; pad with filler documents")
    pending = sorted(docs, key=lambda d: -d.length)
    bins = [MicroBatch() for _ in range(m)]
    lens = [0] * m
    pairs = [0] * m
    i = 0
    while i < len(pending):
        doc = pending[i]
        i += 1
        best = -1
        for j in range(m):
            if lens[j] < context_window and (best < 0 or pairs[j] < pairs[best]):
                best = j
        space = context_window - lens[best]
        if doc.length <= space:
            placed = doc
        else:
            placed = Document(doc.id, space, doc.arrival_batch)
            tail = Document(doc.id, doc.length - space, doc.arrival_batch)
            k = i
            while k < len(pending) and pending[k].length >= tail.length:
                k += 1
            pending.insert(k, tail)
        bins[best].docs.append(placed)
        lens[best] += placed.length
        pairs[best] += placed.length * (placed.length + 1) // 2
    return PackingPlan(0, bins)


def _bb_min_max(lengths, weights, m, cap, lam=0, const=0):
    """Min-max whole-document assignment by branch and bound.

    Bin objective = sum(weights) + lam * sum(lengths) + const (every bin
    pays const, including empty ones). Returns (value, assignment) where
    the assignment vector is the lexicographically smallest one, in input
    document order, that attains the optimum. Raises InfeasibleError when
    no assignment respects the capacity.
    """
    n = len(lengths)
    exact_ints = lam == 0 and const == 0 and all(
        isinstance(w, int) for w in weights)
    total_obj = sum(weights) + lam * sum(lengths) + m * const
    if exact_ints:
        avg_bound = -(-total_obj // m)
    else:
        avg_bound = total_obj / m
    solo = [weights[i] + lam * lengths[i] + const for i in range(n)]

    def solve(doc_order, best_cap, first_hit):
        """DFS over doc_order; returns (value, assignment) or None.

        best_cap prunes at > (first_hit) or >= (improvement search).
        """
        olen = [lengths[i] for i in doc_order]
        owt = [weights[i] for i in doc_order]
        osolo = [solo[i] for i in doc_order]
        suf_len = [0] * (n + 1)
        suf_solo = [0] * (n + 1)
        for k in range(n - 1, -1, -1):
            suf_len[k] = suf_len[k + 1] + olen[k]
            suf_solo[k] = max(osolo[k], suf_solo[k + 1])
        bin_len = [0] * m
        bin_wt = [0] * m
        bin_obj = [const] * m
        assign = [-1] * n
        best = {"val": best_cap, "assign": None}

        def prune(lb):
            if best["val"] is None:
                return False
            return lb > best["val"] if first_hit else lb >= best["val"]

        def dfs(k, cur_max):
            lb = max(cur_max, avg_bound)
            if k < n:
                lb = max(lb, suf_solo[k])
            if prune(lb):
                return True
            if k == n:
                best["val"] = cur_max
                best["assign"] = assign.copy()
                return not first_hit
            free = m * cap - sum(bin_len)
            if suf_len[k] > free:
                return True
            d, w = olen[k], owt[k]
            if min(bin_len) + d > cap:
                return True
            seen = set()
            for j in range(m):
                key = (bin_len[j], bin_wt[j])
                if key in seen or bin_len[j] + d > cap:
                    continue
                seen.add(key)
                new_obj = bin_wt[j] + w + lam * (bin_len[j] + d) + const
                saved = (bin_len[j], bin_wt[j], bin_obj[j])
                bin_len[j] += d
                bin_wt[j] += w
                bin_obj[j] = new_obj
                assign[doc_order[k]] = j
                keep_going = dfs(k + 1, max(cur_max, new_obj))
                bin_len[j], bin_wt[j], bin_obj[j] = saved
                assign[doc_order[k]] = -1
                if not keep_going:
                    return False
            return True

        dfs(0, const)
        if best["assign"] is None:
            return None
        return best["val"], best["assign"]

    size_order = sorted(range(n), key=lambda i: (-lengths[i], i))
    found = solve(size_order, None, first_hit=False)
    if found is None:
        raise InfeasibleError(
            "documents cannot be packed whole within the capacity")
    value, assign = found
    # second pass: lexicographically smallest assignment at the optimum
    lex = solve(list(range(n)), value, first_hit=True)
    if lex is not None:
        value, assign = lex
    return value, assign


def _plan_from_assignment(docs, m, assign) -> PackingPlan:
    bins: list[MicroBatch] = [MicroBatch() for _ in range(m)]
    for doc, j in zip(docs, assign):
        bins[j].docs.append(doc)
    return PackingPlan(0, bins)


def fixed_len_exact_pack(docs, m: int, context_window: int) -> PackingPlan:
    """True min-max of sum(d^2) per micro-batch over whole-doc assignments.

    Small-instance oracle: at most 20 documents, capacity context_window
    per micro-batch, total tokens at most M * window.
    """
    docs = list(docs)
    if len(docs) > _EXACT_DOC_LIMIT:
        raise OracleLimitError(
            f"exact packing handles <= {_EXACT_DOC_LIMIT} documents, "
            f"got {len(docs)}")
    lengths = [d.length for d in docs]
    if sum(lengths) > m * context_window:
        raise InfeasibleError("total tokens exceed M * window")
    weights = [d * d for d in lengths]
    _, assign = _bb_min_max(lengths, weights, m, context_window)
    return _plan_from_assignment(docs, m, assign)


def var_len_exact_pack(docs, m: int, l_max: int,
                       profile: CostProfile) -> PackingPlan:
    """True min-max modeled latency over whole-doc assignments (<= 20 docs)."""
    docs = list(docs)
    if len(docs) > _EXACT_DOC_LIMIT:
        raise OracleLimitError(
            f"exact packing handles <= {_EXACT_DOC_LIMIT} documents, "
            f"got {len(docs)}")
    lengths = [d.length for d in docs]
    if sum(lengths) > m * l_max:
        raise InfeasibleError("total tokens exceed M * l_max")
    weights = [profile.attn_coeff * (d * (d + 1) // 2) for d in lengths]
    _, assign = _bb_min_max(lengths, weights, m, l_max,
                            lam=profile.linear_coeff,
                            const=profile.linear_const)
    return _plan_from_assignment(docs, m, assign)


class HeuristicPacker:
    """Streaming variable-length packer with outlier delay queues.

    Per global batch: carried-over documents join the pending set, new
    outliers are enqueued, every queue holding at least N documents
    releases exactly N (FIFO), and the pending set is placed longest
    first. Each document goes to the micro-batch with the lowest modeled
    latency if it fits under l_max, else the shortest one that fits, else
    it is carried to the next iteration.
    """

    def __init__(self, queues: OutlierQueueSet, n_microbatches: int,
                 l_max: int, profile: CostProfile):
        if n_microbatches < 1:
            raise ConfigError("n_microbatches must be >= 1")
        if l_max < queues.thresholds[0]:
            raise ConfigError("l_max below the first outlier threshold")
        self.queues = queues
        self.n = n_microbatches
        self.l_max = l_max
        self.profile = profile
        self._carried: list[Document] = []

    def _pack(self, pending: list[Document], iteration: int) -> PackingPlan:
        order = sorted(range(len(pending)),
                       key=lambda i: (-pending[i].length, i))
        lengths = np.array([pending[i].length for i in order], dtype=np.int64)
        if len(lengths) and lengths[0] > self.l_max:
            raise ConfigError(
                f"document of length {int(lengths[0])} can never fit "
                f"l_max {self.l_max}")
        assign = _kernels.heuristic_fill(
            lengths, self.n, self.l_max,
            self.profile.attn_coeff, self.profile.linear_coeff)
        mbs = [MicroBatch() for _ in range(self.n)]
        carried: list[Document] = []
        delays: dict[int, int] = {}
        for pos, j in zip(order, assign):
            doc = pending[pos]
            if j < 0:
                carried.append(doc)
            else:
                mbs[j].docs.append(doc)
                delays[doc.id] = _delay(iteration, doc)
        self._carried = carried
        return PackingPlan(iteration, mbs, carried_over=list(carried),
                           delayed_tokens=delays)

    def feed(self, docs, iteration: int) -> PackingPlan:
        pending = self._carried
        self._carried = []
        for doc in docs:
            if self.queues.is_outlier(doc):
                self.queues.push(doc)
            else:
                pending.append(doc)
        pending.extend(self.queues.pop_ready(self.n))
        return self._pack(pending, iteration)

    def flush(self, iteration: int) -> list[PackingPlan]:
        """Pack everything still queued or carried into final iterations."""
        plans: list[PackingPlan] = []
        pending = self._carried + self.queues.drain()
        self._carried = []
        while pending:
            plans.append(self._pack(pending, iteration))
            iteration += 1
            pending = self._carried
            self._carried = []
        return plans


def heuristic_var_len_pack(loader, queues: OutlierQueueSet, n: int,
                           l_max: int, profile: CostProfile):
    """Pack a stream of global batches; yields one plan per iteration.

    After the loader is exhausted, undersized queues are flushed into
    extra final iterations so every document is eventually consumed.
    """
    packer = HeuristicPacker(queues, n, l_max, profile)
    iteration = -1
    for iteration, batch in enumerate(loader):
        yield packer.feed(batch, iteration)
    yield from packer.flush(iteration + 1)


def imbalance_degree_attention(microbatches) -> float:
    """Max over mean of per-micro-batch attention pair counts (1.0 if idle)."""
    works = [_kernels.sum_pair_counts(mb.lengths()) for mb in microbatches]
    total = sum(works)
    if not works or total == 0:
        return 1.0
    return max(works) * len(works) / total


def imbalance_degree_latency(microbatches, pp_size: int,
                             profile: CostProfile) -> float:
    """Max latency * pp_size / total latency.

    With pp_size equal to the micro-batch count this is max over mean;
    it approximates how much a pipelined step stretches versus perfectly
    level micro-batches.
    """
    lats = [latency_of_lengths(mb.lengths(), profile) for mb in microbatches]
    total = sum(lats)
    if not lats or total == 0:
        return 1.0
    return max(lats) * pp_size / total


def token_delay_stats(plans) -> dict:
    """Token-weighted delay statistics over a stream of plans."""
    tokens = weighted = delayed = 0
    max_delay = 0
    for plan in plans:
        for mb in plan.microbatches:
            for doc in mb.docs:
                delay = _delay(plan.iteration, doc)
                tokens += doc.length
                weighted += doc.length * delay
                if delay > 0:
                    delayed += doc.length
                max_delay = max(max_delay, delay)
    return {
        "mean_token_delay": weighted / tokens if tokens else 0.0,
        "max_token_delay": max_delay,
        "delayed_token_fraction": delayed / tokens if tokens else 0.0,
    }


def position_mean_doc_length(plans, context_window: int) -> np.ndarray:
    """Average document piece length at each token position.

    Considers only exactly-full micro-batches, mirroring how fixed-length
    training sequences look: boundary truncation concentrates short
    pieces at the window edges.
    """
    acc = np.zeros(context_window, dtype=np.float64)
    count = 0
    for plan in plans:
        for mb in plan.microbatches:
            if mb.total_length != context_window:
                continue
            pos = 0
            for doc in mb.docs:
                acc[pos:pos + doc.length] += doc.length
                pos += doc.length
            count += 1
    if count == 0:
        raise ValueError("no full-window micro-batches to average")
    return acc / count
