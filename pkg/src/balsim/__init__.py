"""Workload-balance simulator for variable-length document training.

The package models the decision stack of a 4D-parallel training job on
a desk: document packing into micro-batches (sequential baseline,
greedy and exact fixed-length packers, and a delay-queue heuristic),
context-parallel sharding of packed micro-batches (per-sequence,
per-document, adaptive), and a pipeline critical-path latency model,
all driven by a calibratable analytic cost profile instead of GPUs.
"""

from ._kernels import backend as kernel_backend
from .errors import (
    BalsimError,
    ConfigError,
    InfeasibleError,
    IngestError,
    OracleLimitError,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    chunk_documents,
    compare_experiments,
    run_experiment,
)
from .packing import (
    BaselinePacker,
    HeuristicPacker,
    OutlierQueueSet,
    PackingPlan,
    baseline_sequential_pack,
    fixed_len_exact_pack,
    fixed_len_greedy_pack,
    heuristic_var_len_pack,
    imbalance_degree_attention,
    imbalance_degree_latency,
    position_mean_doc_length,
    token_delay_stats,
    var_len_exact_pack,
)
from .pipeline import (
    StageLatency,
    StepReport,
    dp_step_latency,
    event_sim_1f1b,
    microbatch_stage_latency,
    pp_critical_path,
    simulated_speedup,
    stage_latency_for_assignment,
)
from .sharding import (
    ShardAssignment,
    ShardStrategy,
    adaptive_select,
    group_attention_latency,
    per_document_shard,
    per_sequence_shard,
    shard,
    strategy_latencies,
    worker_attention_latency,
)
from .synthetic import SyntheticSpec, generate_synthetic_stream
from .workload import (
    CostProfile,
    Document,
    MicroBatch,
    ParallelismConfig,
    TokenRange,
    attention_kernel_latency,
    attention_workload,
    attention_workload_latency,
    latency_of_lengths,
    linear_workload_latency,
    microbatch_latency,
    range_attention_workload,
)

__version__ = "0.1.0"

__all__ = [
    "BalsimError", "ConfigError", "IngestError", "OracleLimitError",
    "InfeasibleError",
    "TokenRange", "Document", "MicroBatch", "ParallelismConfig",
    "CostProfile",
    "attention_workload", "range_attention_workload",
    "linear_workload_latency", "attention_workload_latency",
    "microbatch_latency", "latency_of_lengths", "attention_kernel_latency",
    "PackingPlan", "OutlierQueueSet", "BaselinePacker", "HeuristicPacker",
    "baseline_sequential_pack", "fixed_len_greedy_pack",
    "fixed_len_exact_pack", "var_len_exact_pack", "heuristic_var_len_pack",
    "imbalance_degree_attention", "imbalance_degree_latency",
    "token_delay_stats", "position_mean_doc_length",
    "ShardStrategy", "ShardAssignment", "per_sequence_shard",
    "per_document_shard", "worker_attention_latency",
    "group_attention_latency", "strategy_latencies", "adaptive_select",
    "shard",
    "StageLatency", "StepReport", "stage_latency_for_assignment",
    "microbatch_stage_latency", "pp_critical_path", "event_sim_1f1b",
    "dp_step_latency", "simulated_speedup",
    "SyntheticSpec", "generate_synthetic_stream",
    "ExperimentConfig", "ExperimentResult", "chunk_documents",
    "run_experiment", "compare_experiments",
    "kernel_backend",
]
