"""Record file round-trips, schema guards, and trace ingestion."""

import logging

import pytest

from balsim.errors import IngestError
from balsim.packing import HeuristicPacker, OutlierQueueSet, PackingPlan
from balsim.pipeline import StepReport
from balsim.records import (
    ingest_trace,
    read_assignments,
    read_plans,
    read_step_reports,
    read_summary_csv,
    write_assignments,
    write_plans,
    write_step_reports,
    write_summary_csv,
    write_trace,
)
from balsim.sharding import per_document_shard, per_sequence_shard
from balsim.workload import CostProfile, MicroBatch
from conftest import make_docs


def sample_plans():
    queues = OutlierQueueSet((64, 192))
    packer = HeuristicPacker(queues, 2, 256, CostProfile())
    plans = [packer.feed(make_docs([80, 30, 20, 200, 10], arrival=0), 0),
             packer.feed(make_docs([40, 90, 15], arrival=1, first_id=5), 1)]
    plans.extend(packer.flush(2))
    return plans


class TestPlanFiles:
    def test_round_trip(self, tmp_path):
        plans = sample_plans()
        path = tmp_path / "plans.jsonl"
        write_plans(plans, path)
        back = read_plans(path)
        assert back == plans

    def test_writes_are_byte_identical(self, tmp_path):
        plans = sample_plans()
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_plans(plans, a)
        write_plans(plans, b)
        assert a.read_bytes() == b.read_bytes()

    def test_header_schema_checked(self, tmp_path):
        path = tmp_path / "plans.jsonl"
        path.write_text('{"type":"header","schema":"balsim.steps.v1"}\n')
        with pytest.raises(IngestError, match="expected schema"):
            read_plans(path)
        path.write_text('{"type":"microbatch"}\n')
        with pytest.raises(IngestError, match="missing header"):
            read_plans(path)

    def test_bad_json_reports_line_number(self, tmp_path):
        path = tmp_path / "plans.jsonl"
        path.write_text('{"type":"header","schema":"balsim.plans.v1"}\n'
                        '{"type":"microbatch", oops\n')
        with pytest.raises(IngestError, match="line 2") as info:
            read_plans(path)
        assert info.value.line == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError, match="cannot read"):
            read_plans(tmp_path / "absent.jsonl")


class TestAssignmentFiles:
    def test_round_trip_both_strategies(self, tmp_path):
        mb = MicroBatch(make_docs([10, 6]))
        assignments = [per_sequence_shard(mb, 2), per_document_shard(mb, 2)]
        path = tmp_path / "shards.jsonl"
        write_assignments(assignments, path)
        assert read_assignments(path) == assignments

    def test_unknown_record_type(self, tmp_path):
        path = tmp_path / "shards.jsonl"
        path.write_text('{"type":"header","schema":"balsim.shards.v1"}\n'
                        '{"type":"mystery"}\n')
        with pytest.raises(IngestError, match="unknown shard record"):
            read_assignments(path)


class TestStepFiles:
    def sample_report(self):
        return StepReport(
            iteration=3, microbatch_tokens=[128, 120],
            microbatch_attention_pairs=[8256, 7260],
            forward=[0.5, 0.4], backward=[1.0, 0.8],
            strategy_choices=["per_sequence", "per_document"],
            imbalance_attention=1.1, imbalance_latency=1.2,
            replica_paths=[4.2], dp_step_latency=4.2,
            pack_seconds=0.777, carried_over_docs=1,
            queue_depths=[0, 2], event_makespan=4.0)

    def test_round_trip_zeroes_wall_clock(self, tmp_path):
        rep = self.sample_report()
        path = tmp_path / "steps.jsonl"
        write_step_reports([rep], path)
        [back] = read_step_reports(path)
        assert back.pack_seconds == 0.0
        assert back == StepReport(**{**rep.__dict__, "pack_seconds": 0.0})
        assert "0.777" not in path.read_text()

    def test_none_makespan_survives(self, tmp_path):
        rep = self.sample_report()
        rep.event_makespan = None
        path = tmp_path / "steps.jsonl"
        write_step_reports([rep], path)
        assert read_step_reports(path)[0].event_makespan is None


class TestSummaryCsv:
    def test_round_trip_and_column_order(self, tmp_path):
        rows = [{"name": "a", "speedup": 1.5, "pack_seconds": 0.9},
                {"name": "b", "speedup": 1.2, "extra": 7}]
        path = tmp_path / "summary.csv"
        write_summary_csv(rows, path)
        text = path.read_text()
        assert text.splitlines()[0] == "name,speedup,extra"
        assert "pack_seconds" not in text
        back = read_summary_csv(path)
        assert [r["name"] for r in back] == ["a", "b"]
        assert back[0]["speedup"] == "1.5"

    def test_byte_identical_rewrites(self, tmp_path):
        rows = [{"name": "a", "speedup": 1.5}]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_summary_csv(rows, a)
        write_summary_csv(rows, b)
        assert a.read_bytes() == b.read_bytes()


class TestTrace:
    def test_full_and_defaulted_fields(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text("# comment line\n"
                        "100\n"
                        "\n"
                        "200 7\n"
                        "300 9 2  # inline comment\n")
        docs = ingest_trace(path)
        assert [(d.id, d.length, d.arrival_batch) for d in docs] \
            == [(0, 100, 0), (7, 200, 0), (9, 300, 2)]

    def test_write_read_round_trip(self, tmp_path):
        docs = make_docs([5, 9, 1], arrival=3)
        path = tmp_path / "trace.txt"
        write_trace(docs, path)
        assert ingest_trace(path) == docs

    @pytest.mark.parametrize("line,match", [
        ("1 2 3 4", "got 4 fields"),
        ("ten", "non-integer"),
        ("0", "length must be >= 1"),
        ("5 1 -2", "arrival_batch must be >= 0"),
    ])
    def test_malformed_lines(self, tmp_path, line, match):
        path = tmp_path / "trace.txt"
        path.write_text("10\n" + line + "\n")
        with pytest.raises(IngestError, match=match) as info:
            ingest_trace(path)
        assert info.value.line == 2

    def test_truncation_warns_once_with_count(self, tmp_path, caplog):
        path = tmp_path / "trace.txt"
        path.write_text("50\n120\n300\n")
        with caplog.at_level(logging.WARNING, logger="balsim.records"):
            docs = ingest_trace(path, context_window=100)
        assert [d.length for d in docs] == [50, 100, 100]
        assert len(caplog.records) == 1
        assert "truncated 2 documents" in caplog.text


def test_plan_file_keeps_carried_and_delays(tmp_path):
    plans = sample_plans()
    carried_totals = sum(len(p.carried_over) for p in plans)
    delay_totals = {k: v for p in plans for k, v in p.delayed_tokens.items()}
    path = tmp_path / "plans.jsonl"
    write_plans(plans, path)
    back = read_plans(path)
    assert sum(len(p.carried_over) for p in back) == carried_totals
    assert {k: v for p in back for k, v in p.delayed_tokens.items()} \
        == delay_totals
