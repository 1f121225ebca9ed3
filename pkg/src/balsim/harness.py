"""Experiment driver: wire a document source through packing, sharding,
and the pipeline latency model, one training iteration at a time.

An experiment is described by a JSON config (see ``ExperimentConfig``).
Each data-parallel replica gets its own document stream sized to exactly
``microbatches_per_step * context_window`` tokens per iteration, so the
fixed-length strategies always see a feasible instance. Synthetic
streams are generated per replica with decorrelated seeds; trace files
are chunked into per-replica batches in file order, padding gaps with
negative-id filler documents.
"""

from __future__ import annotations

import dataclasses
import json
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from . import records
from .errors import ConfigError
from .packing import (
    BaselinePacker,
    HeuristicPacker,
    OutlierQueueSet,
    PackingPlan,
    fixed_len_greedy_pack,
    imbalance_degree_attention,
    imbalance_degree_latency,
    token_delay_stats,
)
from .pipeline import (
    StepReport,
    dp_step_latency,
    event_sim_1f1b,
    pp_critical_path,
    simulated_speedup,
    stage_latency_for_assignment,
)
from .sharding import shard
from .synthetic import SyntheticSpec, generate_synthetic_stream
from .workload import (
    CostProfile,
    Document,
    MicroBatch,
    ParallelismConfig,
    attention_workload,
)

PACK_STRATEGIES = ("baseline", "greedy", "heuristic")
SHARD_POLICIES = ("per_sequence", "per_document", "adaptive")

# Multiplier used to decorrelate per-replica synthetic seeds.
_REPLICA_SEED_STRIDE = 100003


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment description.

    ``queue_thresholds`` and ``l_max`` are absolute token counts here;
    the JSON form gives them as fractions of the context window
    (``queue_thresholds`` ascending, e.g. ``[0.25, 0.75]``) and as
    ``l_max_factor`` (default 1.25).
    """

    name: str
    parallelism: ParallelismConfig
    profile: CostProfile
    packing_strategy: str
    l_max: int
    queue_thresholds: tuple[int, ...]
    shard_policy: str
    source: SyntheticSpec | str
    iterations: int
    seed: int

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {"name", "parallelism", "profile", "packing", "sharding",
                 "input", "iterations", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = Path(base_dir) if base_dir is not None else Path.cwd()

        par = data.get("parallelism")
        if not isinstance(par, dict):
            raise ConfigError("config requires a 'parallelism' object")
        try:
            parallelism = ParallelismConfig(**par)
        except TypeError as exc:
            raise ConfigError(f"bad parallelism section: {exc}") from exc

        prof = data.get("profile", "default")
        if prof == "default":
            profile = CostProfile()
        elif isinstance(prof, str):
            profile = CostProfile.from_file(base / prof)
        elif isinstance(prof, dict):
            profile = CostProfile.from_dict(prof)
        else:
            raise ConfigError("'profile' must be 'default', a path, or an object")

        packing = dict(data.get("packing", {}))
        strategy = packing.pop("strategy", "heuristic")
        if strategy not in PACK_STRATEGIES:
            raise ConfigError(
                f"packing strategy must be one of {PACK_STRATEGIES}, got {strategy!r}")
        window = parallelism.context_window
        l_max_factor = packing.pop("l_max_factor", 1.25)
        if not isinstance(l_max_factor, (int, float)) or l_max_factor < 1.0:
            raise ConfigError("l_max_factor must be a number >= 1.0")
        fractions = packing.pop("queue_thresholds", [0.25, 0.75])
        if packing:
            raise ConfigError(f"unknown packing keys: {sorted(packing)}")
        if (not isinstance(fractions, (list, tuple)) or not fractions
                or any(not isinstance(f, (int, float)) or not 0 < f <= 1
                       for f in fractions)):
            raise ConfigError(
                "queue_thresholds must be fractions of the window in (0, 1]")
        thresholds = tuple(max(1, int(f * window)) for f in fractions)
        if list(thresholds) != sorted(set(thresholds)):
            raise ConfigError(
                f"queue thresholds must be strictly increasing, got {thresholds}")

        sharding = dict(data.get("sharding", {}))
        policy = sharding.pop("policy", "adaptive")
        if sharding:
            raise ConfigError(f"unknown sharding keys: {sorted(sharding)}")
        if policy not in SHARD_POLICIES:
            raise ConfigError(
                f"sharding policy must be one of {SHARD_POLICIES}, got {policy!r}")

        source = data.get("input")
        if not isinstance(source, dict) or len(source) != 1:
            raise ConfigError(
                "'input' must be an object with exactly one of 'synthetic'/'trace'")
        kind, value = next(iter(source.items()))
        per_replica = parallelism.microbatches_per_step * window
        if kind == "synthetic":
            if not isinstance(value, dict):
                raise ConfigError("'input.synthetic' must be an object")
            value = dict(value)
            value.pop("context_window", None)
            value.pop("tokens_per_global_batch", None)
            parsed_source: SyntheticSpec | str = SyntheticSpec.from_dict({
                "context_window": window,
                "tokens_per_global_batch": per_replica,
                **value,
            })
        elif kind == "trace":
            if not isinstance(value, str):
                raise ConfigError("'input.trace' must be a file path")
            parsed_source = str(base / value)
        else:
            raise ConfigError(f"unknown input kind {kind!r}")

        iterations = data.get("iterations", 4)
        if not isinstance(iterations, int) or iterations < 1:
            raise ConfigError("iterations must be a positive integer")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        name = data.get("name", "experiment")
        if not isinstance(name, str) or not name:
            raise ConfigError("name must be a non-empty string")

        return cls(
            name=name,
            parallelism=parallelism,
            profile=profile,
            packing_strategy=strategy,
            l_max=int(l_max_factor * window),
            queue_thresholds=thresholds,
            shard_policy=policy,
            source=parsed_source,
            iterations=iterations,
            seed=seed,
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)


def chunk_documents(docs, target: int) -> list[list[Document]]:
    """Chunk a document list into batches of exactly ``target`` tokens.

    Documents are taken in order; one that would overflow the open batch
    is set aside and retried once space allows, so a single long document
    does not force a huge pad. Remaining gaps (including the final
    partial batch) are closed with negative-id filler documents.
    """
    if any(d.length > target for d in docs):
        raise ConfigError("document longer than the per-replica batch target")
    batches: list[list[Document]] = []
    pool: deque[Document] = deque()
    fills = 0
    i = 0
    while i < len(docs) or pool:
        batch: list[Document] = []
        used = 0
        while used < target:
            space = target - used
            took = False
            for k, doc in enumerate(pool):
                if doc.length <= space:
                    del pool[k]
                    batch.append(doc)
                    used += doc.length
                    took = True
                    break
            if took:
                continue
            while i < len(docs):
                doc = docs[i]
                i += 1
                if doc.length <= space:
                    batch.append(doc)
                    used += doc.length
                    took = True
                    break
                pool.append(doc)
            if not took:
                fills += 1
                batch.append(Document(-fills, space, 0))
                used = target
        batches.append(batch)
    return batches


def _restamp(docs, arrival: int) -> list[Document]:
    return [d if d.arrival_batch == arrival
            else dataclasses.replace(d, arrival_batch=arrival) for d in docs]


def build_replica_streams(config: ExperimentConfig) -> list[list[list[Document]]]:
    """Per-replica, per-iteration document batches.

    Every batch totals exactly ``microbatches_per_step * context_window``
    tokens and its documents are stamped with the iteration index, which
    is what the delay accounting in the packers compares against.
    """
    par = config.parallelism
    target = par.microbatches_per_step * par.context_window
    if isinstance(config.source, SyntheticSpec):
        return [
            generate_synthetic_stream(
                config.source,
                seed=config.seed + _REPLICA_SEED_STRIDE * r,
                n_batches=config.iterations)
            for r in range(par.dp)
        ]
    docs = records.ingest_trace(config.source, par.context_window)
    chunks = chunk_documents(docs, target)
    available = len(chunks) // par.dp
    if available < 1:
        raise ConfigError(
            f"trace provides {len(chunks)} batches, fewer than dp={par.dp}")
    iterations = min(config.iterations, available)
    return [
        [_restamp(chunks[it * par.dp + r], it) for it in range(iterations)]
        for r in range(par.dp)
    ]


class _FillerIds:
    """Running negative ids for alignment padding, unique per experiment."""

    def __init__(self, start: int = -1_000_000):
        self.next_id = start

    def take(self) -> int:
        nid = self.next_id
        self.next_id -= 1
        return nid


def pad_for_cp(mb: MicroBatch, cp: int, filler: _FillerIds,
               arrival: int) -> MicroBatch:
    """Round a micro-batch up to a multiple of 2*cp tokens if needed."""
    remainder = mb.total_length % (2 * cp)
    if remainder == 0:
        return mb
    pad = 2 * cp - remainder
    return MicroBatch(mb.docs + [Document(filler.take(), pad, arrival)])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list[StepReport]
    plans: list[list[PackingPlan]]
    summary: dict


def _make_packer(config: ExperimentConfig):
    par = config.parallelism
    if config.packing_strategy == "baseline":
        return BaselinePacker(par.context_window, par.microbatches_per_step)
    if config.packing_strategy == "heuristic":
        return HeuristicPacker(OutlierQueueSet(config.queue_thresholds),
                               par.microbatches_per_step, config.l_max,
                               config.profile)
    return None  # greedy repacks from scratch every iteration


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the packing/sharding/pipeline stack over every iteration."""
    par = config.parallelism
    streams = build_replica_streams(config)
    iterations = len(streams[0])
    packers = [_make_packer(config) for _ in range(par.dp)]
    filler = _FillerIds()

    plans_by_replica: list[list[PackingPlan]] = [[] for _ in range(par.dp)]
    reports: list[StepReport] = []

    def plans_for(replica: int, iteration: int) -> PackingPlan:
        batch = streams[replica][iteration]
        if config.packing_strategy == "greedy":
            plan = fixed_len_greedy_pack(batch, par.microbatches_per_step,
                                         par.context_window)
            plan.iteration = iteration
            return plan
        return packers[replica].feed(batch, iteration)

    def report_for(iteration: int, replica_plans: list[PackingPlan],
                   pack_seconds: float) -> StepReport:
        tokens: list[int] = []
        pairs: list[int] = []
        fwd: list[float] = []
        bwd: list[float] = []
        choices: list[str] = []
        paths: list[float] = []
        makespans: list[float] = []
        all_mbs: list[MicroBatch] = []
        carried = 0
        depths = [0] * len(config.queue_thresholds)
        for replica, plan in enumerate(replica_plans):
            stages = []
            for mb in plan.microbatches:
                all_mbs.append(mb)
                tokens.append(mb.total_length)
                pairs.append(attention_workload(mb.lengths()))
                padded = pad_for_cp(mb, par.cp, filler, iteration)
                assignment = shard(padded, par.cp, config.shard_policy,
                                   config.profile)
                choices.append(assignment.strategy.value)
                stage = stage_latency_for_assignment(assignment, par,
                                                     config.profile)
                stages.append(stage)
                fwd.append(stage.forward)
                bwd.append(stage.backward)
            paths.append(pp_critical_path(stages, par.pp))
            makespans.append(event_sim_1f1b(stages, par.pp))
            carried += len(plan.carried_over)
            packer = packers[replica]
            if isinstance(packer, HeuristicPacker):
                for q, depth in enumerate(packer.queues.depths()):
                    depths[q] += depth
        return StepReport(
            iteration=iteration,
            microbatch_tokens=tokens,
            microbatch_attention_pairs=pairs,
            forward=fwd,
            backward=bwd,
            strategy_choices=choices,
            imbalance_attention=imbalance_degree_attention(all_mbs),
            imbalance_latency=imbalance_degree_latency(
                all_mbs, max(len(all_mbs), 1), config.profile),
            replica_paths=paths,
            dp_step_latency=dp_step_latency(paths),
            pack_seconds=pack_seconds,
            carried_over_docs=carried,
            queue_depths=depths,
            event_makespan=max(makespans),
        )

    for iteration in range(iterations):
        replica_plans = []
        t0 = time.perf_counter()
        for replica in range(par.dp):
            plan = plans_for(replica, iteration)
            replica_plans.append(plan)
            plans_by_replica[replica].append(plan)
        pack_seconds = time.perf_counter() - t0
        reports.append(report_for(iteration, replica_plans, pack_seconds))

    # Drain carried documents and queued outliers into trailing iterations.
    extra: list[list[PackingPlan]] = [
        packers[r].flush(iterations) if packers[r] is not None else []
        for r in range(par.dp)
    ]
    for offset in range(max((len(e) for e in extra), default=0)):
        iteration = iterations + offset
        replica_plans = []
        t0 = time.perf_counter()
        for replica in range(par.dp):
            if offset < len(extra[replica]):
                plan = extra[replica][offset]
            else:
                plan = PackingPlan(iteration, [])
            replica_plans.append(plan)
            plans_by_replica[replica].append(plan)
        pack_seconds = time.perf_counter() - t0
        reports.append(report_for(iteration, replica_plans, pack_seconds))

    return ExperimentResult(config, reports, plans_by_replica,
                            summarize(config, reports, plans_by_replica,
                                      streams))


def summarize(config: ExperimentConfig, reports: list[StepReport],
              plans_by_replica: list[list[PackingPlan]],
              streams=None) -> dict:
    """Flat, CSV-friendly rollup of one experiment run."""
    par = config.parallelism
    all_plans = [p for plans in plans_by_replica for p in plans]
    delay = token_delay_stats(all_plans)
    steps = [r.dp_step_latency for r in reports]
    choices = [c for r in reports for c in r.strategy_choices]
    total_tokens = sum(t for r in reports for t in r.microbatch_tokens)
    filler_tokens = sum(
        d.length for plans in plans_by_replica for p in plans
        for mb in p.microbatches for d in mb.docs if d.id < 0)
    # Conservation audit: after the flush, every fed token must have been
    # emitted in some micro-batch (ids may repeat when documents split).
    audit = {}
    if streams is not None:
        tokens_in = sum(d.length for stream in streams
                        for batch in stream for d in batch)
        ids_in = {d.id for stream in streams for batch in stream
                  for d in batch}
        ids_out = {d.id for p in all_plans for mb in p.microbatches
                   for d in mb.docs}
        leftover = sum(len(plans[-1].carried_over)
                       for plans in plans_by_replica if plans)
        audit = {
            "tokens_in": tokens_in,
            "conservation_ok": (tokens_in == total_tokens
                                and ids_in <= ids_out and leftover == 0),
        }
    return {
        "name": config.name,
        "packing_strategy": config.packing_strategy,
        "shard_policy": config.shard_policy,
        "iterations": len(reports),
        "context_window": par.context_window,
        "microbatches_per_step": par.microbatches_per_step,
        "tp": par.tp, "cp": par.cp, "pp": par.pp, "dp": par.dp,
        "seed": config.seed,
        "total_step_latency": sum(steps),
        "mean_step_latency": sum(steps) / len(steps) if steps else 0.0,
        "mean_imbalance_attention": _mean(
            [r.imbalance_attention for r in reports]),
        "mean_imbalance_latency": _mean(
            [r.imbalance_latency for r in reports]),
        "mean_token_delay": delay["mean_token_delay"],
        "max_token_delay": delay["max_token_delay"],
        "delayed_token_fraction": delay["delayed_token_fraction"],
        "per_sequence_shards": choices.count("per_sequence"),
        "per_document_shards": choices.count("per_document"),
        "total_tokens": total_tokens,
        "filler_token_fraction": (filler_tokens / total_tokens
                                  if total_tokens else 0.0),
        **audit,
        "pack_seconds": sum(r.pack_seconds for r in reports),
    }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def compare_experiments(baseline: ExperimentResult,
                        candidate: ExperimentResult) -> dict:
    """Paired speedup of candidate over baseline plus both rollups."""
    speedup = simulated_speedup(
        [r.dp_step_latency for r in baseline.reports],
        [r.dp_step_latency for r in candidate.reports])
    return {
        "baseline": baseline.config.name,
        "candidate": candidate.config.name,
        "speedup": speedup,
        "baseline_mean_step_latency": baseline.summary["mean_step_latency"],
        "candidate_mean_step_latency": candidate.summary["mean_step_latency"],
    }
