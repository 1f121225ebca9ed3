"""Pipeline-parallel step latency: analytic critical path + event sim.

Per-stage cost of a micro-batch is the context-parallel group's
attention latency plus the linear-ops latency on each worker's token
share, split evenly over pp stages; backward scales that by the
profile's backward_ratio.

For a one-forward-one-backward schedule the step latency is approximated
by the critical path

    T = pp * (f* + b*) + sum over other micro-batches of (f_i + b_i)

where * is the micro-batch with the largest f+b: the slowest micro-batch
traverses every stage while the rest serialize behind it. An
event-driven simulator of the actual 1F1B (or GPipe) dependency graph
validates the formula; the two agree exactly on balanced micro-batches
and within a modest budget on skewed ones.
"""

from __future__ import annotations

from dataclasses import dataclass

from .sharding import ShardAssignment, group_attention_latency, shard
from .workload import CostProfile, MicroBatch, ParallelismConfig, linear_workload_latency


@dataclass(frozen=True)
class StageLatency:
    """Per-stage forward and backward time of one micro-batch."""

    forward: float
    backward: float

    @property
    def round_trip(self) -> float:
        return self.forward + self.backward


@dataclass
class StepReport:
    """Everything recorded about one training iteration."""

    iteration: int
    microbatch_tokens: list[int]
    microbatch_attention_pairs: list[int]
    forward: list[float]
    backward: list[float]
    strategy_choices: list[str]
    imbalance_attention: float
    imbalance_latency: float
    replica_paths: list[float]
    dp_step_latency: float
    pack_seconds: float
    carried_over_docs: int
    queue_depths: list[int]
    event_makespan: float | None = None


def stage_latency_for_assignment(assignment: ShardAssignment,
                                 config: ParallelismConfig,
                                 profile: CostProfile) -> StageLatency:
    """Stage cost given an already-chosen shard assignment."""
    attn = group_attention_latency(assignment, profile)
    tokens_per_worker = sum(assignment.doc_lengths) // assignment.cp
    forward = (attn + linear_workload_latency(tokens_per_worker, profile)) / config.pp
    return StageLatency(forward, profile.backward_ratio * forward)


def microbatch_stage_latency(mb: MicroBatch, config: ParallelismConfig,
                             profile: CostProfile,
                             policy: str = "adaptive") -> StageLatency:
    """Per-stage cost of a micro-batch under the given sharding policy."""
    assignment = shard(mb, config.cp, policy, profile)
    return stage_latency_for_assignment(assignment, config, profile)


def pp_critical_path(stages: list[StageLatency], pp: int) -> float:
    """Analytic 1F1B step latency for one pipeline's micro-batches."""
    if pp < 1:
        raise ValueError("pp must be >= 1")
    if not stages:
        return 0.0
    trips = [s.round_trip for s in stages]
    return sum(trips) + (pp - 1) * max(trips)


def event_sim_1f1b(stages: list[StageLatency], pp: int,
                   schedule: str = "1f1b") -> float:
    """Event-driven makespan of the full pipeline dependency graph.

    Every stage executes its fixed operation order (1F1B warmup /
    steady / cooldown, or GPipe all-forward-then-backward); an operation
    starts when its predecessor on the same stage and its cross-stage
    dependency both finish.
    """
    if pp < 1:
        raise ValueError("pp must be >= 1")
    n = len(stages)
    if n == 0:
        return 0.0
    orders = []
    for s in range(pp):
        if schedule == "gpipe":
            order = [("F", i) for i in range(n)]
            order += [("B", i) for i in reversed(range(n))]
        elif schedule == "1f1b":
            warmup = min(pp - s - 1, n)
            order = [("F", i) for i in range(warmup)]
            for k in range(n - warmup):
                order.append(("F", warmup + k))
                order.append(("B", k))
            order += [("B", i) for i in range(n - warmup, n)]
        else:
            raise ValueError(f"unknown schedule {schedule!r}")
        orders.append(order)

    f_end = [[None] * n for _ in range(pp)]
    b_end = [[None] * n for _ in range(pp)]
    ptr = [0] * pp
    free = [0.0] * pp
    remaining = pp * 2 * n
    while remaining:
        progressed = False
        for s in range(pp):
            while ptr[s] < len(orders[s]):
                kind, i = orders[s][ptr[s]]
                if kind == "F":
                    dep = 0.0 if s == 0 else f_end[s - 1][i]
                    dur = stages[i].forward
                else:
                    dep = f_end[s][i] if s == pp - 1 else b_end[s + 1][i]
                    dur = stages[i].backward
                if dep is None:
                    break
                end = max(free[s], dep) + dur
                if kind == "F":
                    f_end[s][i] = end
                else:
                    b_end[s][i] = end
                free[s] = end
                ptr[s] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise RuntimeError("pipeline schedule deadlocked")
    return max(free)


def dp_step_latency(replica_paths: list[float]) -> float:
    """Step latency across data-parallel replicas: the slowest one."""
    if not replica_paths:
        raise ValueError("at least one replica is required")
    return max(replica_paths)


def simulated_speedup(baseline_steps: list[float],
                      candidate_steps: list[float]) -> float:
    """Mean per-iteration ratio baseline/candidate over paired iterations.

    Values above 1.0 mean the candidate is faster. Extra trailing
    iterations on either side (queue flushes) are ignored.
    """
    n = min(len(baseline_steps), len(candidate_steps))
    if n == 0:
        raise ValueError("no paired iterations to compare")
    return sum(b / c for b, c in zip(baseline_steps[:n],
                                     candidate_steps[:n])) / n
