"""Trace format round-trips, validation diagnostics, and the CLI."""

from __future__ import annotations

import json

import pytest

from diffusekit.cli import bench_report, main
from diffusekit.trace import (
    TraceError,
    gen_benchmark,
    parse_trace,
    print_trace,
)


class TestTraceFormat:
    @pytest.mark.parametrize(
        "name", ["stencil", "blackscholes_chain", "jacobi", "cg_like"]
    )
    def test_round_trip(self, name):
        events = gen_benchmark(name, iters=2)
        assert parse_trace(print_trace(events)) == events

    def test_empty_input(self):
        assert parse_trace("") == []
        assert parse_trace("\n\n") == []

    def test_malformed_privilege_names_line(self):
        text = (
            '{"event": "create_store", "id": 0, "shape": [4]}\n'
            '{"event": "create_partition", "id": 0, "store": 0, "kind": "none"}\n'
            '{"event": "index_task", "kind": "K", "domain": [2],'
            ' "args": [{"store": 0, "part": 0, "priv": "X"}]}\n'
        )
        with pytest.raises(TraceError, match="line 3.*privilege"):
            parse_trace(text)

    def test_unknown_store_rejected(self):
        with pytest.raises(TraceError, match="unknown store"):
            parse_trace('{"event": "create_partition", "id": 0, "store": 5, "kind": "none"}')

    def test_duplicate_store_id_rejected(self):
        text = (
            '{"event": "create_store", "id": 0, "shape": [4]}\n'
            '{"event": "create_store", "id": 0, "shape": [4]}\n'
        )
        with pytest.raises(TraceError, match="line 2"):
            parse_trace(text)

    def test_reference_underflow_rejected(self):
        text = (
            '{"event": "create_store", "id": 0, "shape": [4]}\n'
            '{"event": "drop_ref", "store": 0}\n'
            '{"event": "drop_ref", "store": 0}\n'
        )
        with pytest.raises(TraceError, match="underflow"):
            parse_trace(text)

    def test_invalid_json_names_line(self):
        with pytest.raises(TraceError, match="line 1"):
            parse_trace("not json")

    def test_unknown_event_rejected(self):
        with pytest.raises(TraceError, match="unknown event"):
            parse_trace('{"event": "destroy_everything"}')

    def test_tiling_rank_mismatch_rejected(self):
        text = (
            '{"event": "create_store", "id": 0, "shape": [4, 4]}\n'
            '{"event": "create_partition", "id": 0, "store": 0, "kind": "tiling",'
            ' "tile": [2], "offset": [0], "proj": {"A": [[1]], "b": [0]}}\n'
        )
        with pytest.raises(TraceError, match="rank"):
            parse_trace(text)

    def test_unknown_benchmark_rejected(self):
        with pytest.raises(ValueError):
            gen_benchmark("nonsense")


@pytest.fixture()
def stencil_trace(tmp_path):
    path = tmp_path / "stencil.trace"
    path.write_text(print_trace(gen_benchmark("stencil", iters=2)))
    return str(path)


class TestCli:
    def test_gen_round_trips_through_stdout(self, capsys):
        assert main(["gen", "stencil", "--iters", "1"]) == 0
        out = capsys.readouterr().out
        assert parse_trace(out) == gen_benchmark("stencil", iters=1)

    def test_analyze_reports_fusion(self, stencil_trace, capsys):
        assert main(["analyze", stencil_trace]) == 0
        out = capsys.readouterr().out
        assert "tasks: 12 -> 4" in out

    def test_analyze_small_window_reports_aliasing_verdict(self, capsys):
        path = "-"
        import io
        import sys

        trace = print_trace(gen_benchmark("stencil", iters=3))
        old = sys.stdin
        sys.stdin = io.StringIO(trace)
        try:
            assert main(["analyze", "-", "--window", "5"]) == 0
        finally:
            sys.stdin = old
        out = capsys.readouterr().out
        assert "AntiDep" in out

    def test_run_diff_reports_identical_heaps(self, tmp_path, capsys):
        path = tmp_path / "t.trace"
        path.write_text(print_trace(gen_benchmark("stencil", iters=10)))
        assert main(["run", str(path), "--diff"]) == 0
        out = capsys.readouterr().out
        assert "tasks: 60 -> 20" in out
        assert "heaps identical" in out

    def test_run_diff_engine_flags(self, stencil_trace, capsys):
        for flags in ([], ["--no-temp-elim"], ["--no-memo"], ["--window", "3"]):
            assert main(["run", stencil_trace, "--diff", *flags]) == 0
            assert "heaps identical" in capsys.readouterr().out

    def test_json_report(self, stencil_trace, tmp_path):
        out = tmp_path / "report.json"
        assert main(["analyze", stencil_trace, "--json-report", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["tasks_in"] == 12 and payload["tasks_out"] == 4
        for key in ("fused_prefixes", "temporaries_eliminated", "memo_hits", "loads", "stores"):
            assert key in payload

    def test_canon_prints_identical_lines_for_isomorphic_windows(self, tmp_path, capsys):
        lines = []
        for base in (0, 10):
            a, b = base, base + 1
            lines.append({"event": "create_store", "id": a, "shape": [4]})
            lines.append({"event": "create_store", "id": b, "shape": [4]})
            lines.append({"event": "create_partition", "id": a, "store": a, "kind": "none"})
            lines.append({"event": "create_partition", "id": b, "store": b, "kind": "none"})
            lines.append(
                {
                    "event": "index_task",
                    "kind": "COPY",
                    "domain": [1],
                    "args": [
                        {"store": a, "part": a, "priv": "R"},
                        {"store": b, "part": b, "priv": "W"},
                    ],
                }
            )
            lines.append({"event": "flush"})
        path = tmp_path / "canon.trace"
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        assert main(["canon", str(path)]) == 0
        blocks = [b for b in capsys.readouterr().out.strip().split("\n\n") if b]
        assert len(blocks) == 2
        assert blocks[0] == blocks[1]

    def test_bench_stencil_counts(self, capsys):
        assert main(["bench", "stencil", "--iters", "2"]) == 0
        out = capsys.readouterr().out
        assert "6 -> 2" in out

    def test_trace_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.trace"
        path.write_text('{"event": "drop_ref", "store": 9}\n')
        assert main(["run", str(path)]) == 2
        assert "trace error" in capsys.readouterr().err

    def test_bench_report_structure(self):
        result = bench_report("jacobi", iters=3)
        assert result["tasks_per_iter_in"] == 3
        assert result["tasks_per_iter_fused"] == 2
        assert result["traffic_reduction"] >= 1.0
