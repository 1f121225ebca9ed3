"""Line-delimited record I/O for plans, shard assignments, and reports.

Every file starts with a header record carrying a schema tag; payload
records follow one JSON object per line. Emitted files are
byte-deterministic for a given input (no timestamps, stable key order),
which is why measured wall-clock fields such as ``pack_seconds`` are
deliberately not serialized: readers reconstruct them as 0.0, and the
live values only appear on stdout. Everything else round-trips exactly.

Trace files are plain text: one document per line as
``length [id [arrival_batch]]``, with ``#`` comments and blank lines
ignored.
"""

from __future__ import annotations

import csv
import json
import logging

from .errors import IngestError
from .packing import PackingPlan
from .pipeline import StepReport
from .sharding import ShardAssignment, ShardStrategy
from .workload import Document, MicroBatch, TokenRange

logger = logging.getLogger(__name__)

PLANS_SCHEMA = "balsim.plans.v1"
SHARDS_SCHEMA = "balsim.shards.v1"
STEPS_SCHEMA = "balsim.steps.v1"


def _dump(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), sort_keys=False)


def _read_records(path, schema: str) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON: {exc}", line=lineno) from exc
    if not records or records[0].get("type") != "header":
        raise IngestError(f"{path}: missing header record")
    if records[0].get("schema") != schema:
        raise IngestError(
            f"{path}: expected schema {schema}, got {records[0].get('schema')!r}")
    return records[1:]


def write_plans(plans, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"type": "header", "schema": PLANS_SCHEMA}) + "\n")
        for plan in plans:
            for j, mb in enumerate(plan.microbatches):
                fh.write(_dump({
                    "type": "microbatch",
                    "iteration": plan.iteration,
                    "index": j,
                    "doc_ids": [d.id for d in mb.docs],
                    "lengths": [d.length for d in mb.docs],
                    "arrivals": [d.arrival_batch for d in mb.docs],
                    "delays": [plan.delayed_tokens.get(d.id, 0)
                               for d in mb.docs],
                }) + "\n")
            if plan.carried_over:
                fh.write(_dump({
                    "type": "carried",
                    "iteration": plan.iteration,
                    "doc_ids": [d.id for d in plan.carried_over],
                    "lengths": [d.length for d in plan.carried_over],
                    "arrivals": [d.arrival_batch for d in plan.carried_over],
                }) + "\n")


def read_plans(path) -> list[PackingPlan]:
    plans: dict[int, PackingPlan] = {}
    for rec in _read_records(path, PLANS_SCHEMA):
        it = rec["iteration"]
        plan = plans.setdefault(it, PackingPlan(it, []))
        docs = [Document(i, l, a) for i, l, a in
                zip(rec["doc_ids"], rec["lengths"], rec["arrivals"])]
        if rec["type"] == "microbatch":
            plan.microbatches.append(MicroBatch(docs))
            for doc, delay in zip(docs, rec["delays"]):
                plan.delayed_tokens[doc.id] = delay
        elif rec["type"] == "carried":
            plan.carried_over.extend(docs)
        else:
            raise IngestError(f"unknown plan record type {rec['type']!r}")
    return [plans[it] for it in sorted(plans)]


def write_assignments(assignments, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"type": "header", "schema": SHARDS_SCHEMA}) + "\n")
        for j, a in enumerate(assignments):
            fh.write(_dump({
                "type": "assignment",
                "index": j,
                "strategy": a.strategy.value,
                "cp": a.cp,
                "doc_ids": a.doc_ids,
                "doc_lengths": a.doc_lengths,
                "workers": [[[pos, r.start, r.end] for pos, r in worker]
                            for worker in a.workers],
            }) + "\n")


def read_assignments(path) -> list[ShardAssignment]:
    out = []
    for rec in _read_records(path, SHARDS_SCHEMA):
        if rec["type"] != "assignment":
            raise IngestError(f"unknown shard record type {rec['type']!r}")
        out.append(ShardAssignment(
            strategy=ShardStrategy(rec["strategy"]),
            cp=rec["cp"],
            doc_ids=list(rec["doc_ids"]),
            doc_lengths=list(rec["doc_lengths"]),
            workers=[[(pos, TokenRange(s, e)) for pos, s, e in worker]
                     for worker in rec["workers"]],
        ))
    return out


# Wall-clock measurements; kept out of files so reports stay reproducible.
TIMING_FIELDS = ("pack_seconds",)

_STEP_FIELDS = [
    "iteration", "microbatch_tokens", "microbatch_attention_pairs",
    "forward", "backward", "strategy_choices", "imbalance_attention",
    "imbalance_latency", "replica_paths", "dp_step_latency",
    "carried_over_docs", "queue_depths", "event_makespan",
]


def write_step_reports(reports, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"type": "header", "schema": STEPS_SCHEMA}) + "\n")
        for rep in reports:
            rec = {"type": "step"}
            rec.update({f: getattr(rep, f) for f in _STEP_FIELDS})
            fh.write(_dump(rec) + "\n")


def read_step_reports(path) -> list[StepReport]:
    out = []
    for rec in _read_records(path, STEPS_SCHEMA):
        if rec["type"] != "step":
            raise IngestError(f"unknown step record type {rec['type']!r}")
        out.append(StepReport(pack_seconds=0.0,
                              **{f: rec[f] for f in _STEP_FIELDS}))
    return out


def write_summary_csv(summaries: list[dict], path) -> None:
    """Summary rows as CSV; column order follows first appearance.

    Timing fields are dropped so the file is identical across runs.
    """
    fields: list[str] = []
    for summary in summaries:
        for key in summary:
            if key not in fields and key not in TIMING_FIELDS:
                fields.append(key)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n",
                                extrasaction="ignore")
        writer.writeheader()
        for summary in summaries:
            writer.writerow(summary)


def read_summary_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def ingest_trace(path, context_window: int | None = None) -> list[Document]:
    """Read a document-length trace; returns documents in file order.

    Lengths above the context window are truncated to it (mirroring how
    fixed-window training data is prepared) with a warning.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read trace {path}: {exc}") from exc
    docs: list[Document] = []
    truncated = 0
    for lineno, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) > 3:
            raise IngestError(
                f"expected 'length [id [arrival]]', got {len(parts)} fields",
                line=lineno)
        try:
            values = [int(p) for p in parts]
        except ValueError as exc:
            raise IngestError(f"non-integer field: {exc}", line=lineno) from exc
        length = values[0]
        doc_id = values[1] if len(values) > 1 else len(docs)
        arrival = values[2] if len(values) > 2 else 0
        if length < 1:
            raise IngestError(f"document length must be >= 1, got {length}",
                              line=lineno)
        if arrival < 0:
            raise IngestError(f"arrival_batch must be >= 0, got {arrival}",
                              line=lineno)
        if context_window is not None and length > context_window:
            length = context_window
            truncated += 1
        docs.append(Document(doc_id, length, arrival))
    if truncated:
        logger.warning("truncated %d documents to the %d-token window",
                       truncated, context_window)
    return docs


def write_trace(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(f"{d.length} {d.id} {d.arrival_batch}\n")
