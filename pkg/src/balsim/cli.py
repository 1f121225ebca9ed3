"""Command-line front end.

Subcommands mirror the library layers: ``generate`` synthesizes a
document trace, ``pack`` turns a trace into micro-batch plans, ``shard``
splits planned micro-batches across context-parallel workers,
``simulate`` runs a full experiment config, and ``compare`` runs two
configs and reports the paired speedup.

Exit codes: 0 success, 2 bad config or infeasible instance, 3 unreadable
or malformed input data, 4 exact-solver size limit exceeded, 1 anything
else.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import records
from ._kernels import backend
from .errors import ConfigError, IngestError, InfeasibleError, OracleLimitError
from .harness import (
    ExperimentConfig,
    chunk_documents,
    compare_experiments,
    pad_for_cp,
    run_experiment,
    _FillerIds,
)
from .packing import (
    BaselinePacker,
    HeuristicPacker,
    OutlierQueueSet,
    fixed_len_exact_pack,
    fixed_len_greedy_pack,
    imbalance_degree_attention,
    token_delay_stats,
    var_len_exact_pack,
)
from .sharding import shard, worker_attention_latency
from .synthetic import SyntheticSpec, generate_synthetic_stream
from .workload import CostProfile

PACK_CHOICES = ("baseline", "greedy", "heuristic", "exact-fixed", "exact-var")


def _load_profile(spec: str) -> CostProfile:
    if spec == "default":
        return CostProfile()
    return CostProfile.from_file(spec)


def _resolve_config(name: str) -> Path:
    """Interpret a config argument as a path, or look it up by name
    (with or without .json) under $BALSIM_CONFIG_DIR."""
    path = Path(name)
    if path.exists():
        return path
    config_dir = os.environ.get("BALSIM_CONFIG_DIR")
    if config_dir:
        for candidate in (Path(config_dir) / name,
                          Path(config_dir) / f"{name}.json"):
            if candidate.exists():
                return candidate
    raise ConfigError(f"config {name!r} not found"
                      + ("" if config_dir else
                         " (set BALSIM_CONFIG_DIR to resolve bare names)"))


def cmd_generate(args) -> int:
    if args.spec:
        try:
            data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read spec {args.spec}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"spec is not valid JSON: {exc}") from exc
        spec = SyntheticSpec.from_dict(data)
    else:
        if args.context_window is None or args.tokens_per_batch is None:
            raise ConfigError(
                "either --spec or both --context-window and "
                "--tokens-per-batch are required")
        spec = SyntheticSpec(context_window=args.context_window,
                             tokens_per_global_batch=args.tokens_per_batch)
    batches = generate_synthetic_stream(spec, seed=args.seed,
                                        n_batches=args.batches)
    docs = [d for batch in batches for d in batch]
    records.write_trace(docs, args.output)
    total = sum(d.length for d in docs)
    long_docs = sum(d.length > spec.context_window // 2 for d in docs)
    print(f"wrote {len(docs)} documents / {total} tokens "
          f"to {args.output}")
    print(f"documents longer than half the window: {long_docs} "
          f"({long_docs / len(docs):.2%})")
    return 0


def cmd_pack(args) -> int:
    profile = _load_profile(args.profile)
    docs = records.ingest_trace(args.trace, args.window)
    target = args.microbatches * args.window
    l_max = int(args.l_max_factor * args.window)

    if args.strategy == "exact-fixed":
        plans = [fixed_len_exact_pack(docs, args.microbatches, args.window)]
    elif args.strategy == "exact-var":
        plans = [var_len_exact_pack(docs, args.microbatches, l_max, profile)]
    elif args.strategy == "greedy":
        plans = []
        for it, batch in enumerate(chunk_documents(docs, target)):
            plan = fixed_len_greedy_pack(batch, args.microbatches, args.window)
            plan.iteration = it
            plans.append(plan)
    else:
        if args.strategy == "baseline":
            packer = BaselinePacker(args.window, args.microbatches)
        else:
            thresholds = tuple(max(1, int(f * args.window))
                               for f in args.queue_thresholds)
            packer = HeuristicPacker(OutlierQueueSet(thresholds),
                                     args.microbatches, l_max, profile)
        batches = chunk_documents(docs, target)
        plans = [packer.feed(batch, it) for it, batch in enumerate(batches)]
        plans.extend(packer.flush(len(batches)))

    records.write_plans(plans, args.output)
    mbs = [mb for plan in plans for mb in plan.microbatches]
    delay = token_delay_stats(plans)
    print(f"wrote {len(plans)} iterations / {len(mbs)} micro-batches "
          f"to {args.output}")
    print(f"attention imbalance degree: "
          f"{imbalance_degree_attention(mbs):.4f}")
    print(f"mean token delay: {delay['mean_token_delay']:.4f} iterations "
          f"(max {delay['max_token_delay']}, "
          f"fraction delayed {delay['delayed_token_fraction']:.4f})")
    return 0


def cmd_shard(args) -> int:
    profile = _load_profile(args.profile)
    plans = records.read_plans(args.plans)
    filler = _FillerIds()
    assignments = []
    counts = {"per_sequence": 0, "per_document": 0}
    worst = 0.0
    for plan in plans:
        for mb in plan.microbatches:
            padded = pad_for_cp(mb, args.cp, filler, plan.iteration)
            assignment = shard(padded, args.cp, args.policy, profile)
            assignments.append(assignment)
            counts[assignment.strategy.value] += 1
            worst = max(worst, max(
                worker_attention_latency(assignment, w, profile)
                for w in range(args.cp)))
    records.write_assignments(assignments, args.output)
    print(f"wrote {len(assignments)} assignments to {args.output}")
    print(f"strategy counts: per_sequence={counts['per_sequence']} "
          f"per_document={counts['per_document']}")
    print(f"worst single-worker attention latency: {worst:.6f}s")
    return 0


def _print_summary(summary: dict) -> None:
    width = max(len(k) for k in summary)
    for key, value in summary.items():
        if isinstance(value, float):
            print(f"{key:<{width}}  {value:.6g}")
        else:
            print(f"{key:<{width}}  {value}")


def _load_experiment(path, seed_override) -> ExperimentConfig:
    config = ExperimentConfig.from_file(_resolve_config(path))
    if seed_override is not None:
        config = dataclasses.replace(config, seed=seed_override)
    return config


def cmd_simulate(args) -> int:
    config = _load_experiment(args.config, args.seed)
    result = run_experiment(config)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    records.write_step_reports(result.reports, outdir / "steps.jsonl")
    records.write_summary_csv([result.summary], outdir / "summary.csv")
    if args.dump_plans:
        for r, plans in enumerate(result.plans):
            records.write_plans(plans, outdir / f"plans-r{r}.jsonl")
    print(f"kernel backend: {backend()}")
    _print_summary(result.summary)
    return 0


def cmd_compare(args) -> int:
    base_cfg = _load_experiment(args.baseline, args.seed)
    cand_cfg = _load_experiment(args.candidate, args.seed)
    base = run_experiment(base_cfg)
    cand = run_experiment(cand_cfg)
    comparison = compare_experiments(base, cand)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    records.write_summary_csv([base.summary, cand.summary],
                              outdir / "summary.csv")
    (outdir / "comparison.json").write_text(
        json.dumps(comparison, indent=2, sort_keys=False) + "\n",
        encoding="utf-8")
    print(f"baseline:  {comparison['baseline']} "
          f"(mean step {comparison['baseline_mean_step_latency']:.6f}s)")
    print(f"candidate: {comparison['candidate']} "
          f"(mean step {comparison['candidate_mean_step_latency']:.6f}s)")
    print(f"speedup:   {comparison['speedup']:.4f}x")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="balsim",
        description="Workload-balance simulator for variable-length "
                    "document training.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress info, -vv for debug detail")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a document trace")
    p.add_argument("--spec", help="JSON file of distribution parameters")
    p.add_argument("--context-window", type=int)
    p.add_argument("--tokens-per-batch", type=int,
                   help="tokens per generated batch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pack", help="pack a trace into micro-batch plans")
    p.add_argument("--trace", required=True)
    p.add_argument("--strategy", choices=PACK_CHOICES, default="heuristic")
    p.add_argument("--window", type=int, required=True,
                   help="context window (fixed micro-batch token budget)")
    p.add_argument("--microbatches", type=int, default=4)
    p.add_argument("--l-max-factor", type=float, default=1.25)
    p.add_argument("--queue-thresholds", type=float, nargs="+",
                   default=[0.25, 0.75],
                   help="outlier thresholds as fractions of the window")
    p.add_argument("--profile", default="default")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("shard", help="shard planned micro-batches across "
                                     "context-parallel workers")
    p.add_argument("--plans", required=True)
    p.add_argument("--cp", type=int, required=True)
    p.add_argument("--policy", default="adaptive",
                   choices=("per_sequence", "per_document", "adaptive"))
    p.add_argument("--profile", default="default")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_shard)

    p = sub.add_parser("simulate", help="run one experiment config")
    p.add_argument("--config", required=True,
                   help="path, or bare name under $BALSIM_CONFIG_DIR")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--output-dir", default="out")
    p.add_argument("--dump-plans", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run two configs, report speedup")
    p.add_argument("--baseline", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--seed", type=int, help="override both config seeds")
    p.add_argument("--output-dir", default="out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OracleLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
