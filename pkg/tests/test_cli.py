"""CLI subcommands: run, check, export-dot, census, and their exit codes."""

from __future__ import annotations

import io
import json

import pytest

from dagbft import trace
from dagbft.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATIONS, main

from .scenarios import fig_broadcast_scenario


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(fig_broadcast_scenario().to_dict()))
    return path


def run_cli(*argv) -> tuple[int, str]:
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


class TestRun:
    def test_run_writes_trace_and_summary(self, tmp_path, scenario_file):
        out_path = tmp_path / "trace.jsonl"
        code, text = run_cli("run", "--scenario", scenario_file, "--out", out_path)
        assert code == EXIT_OK
        assert "blocks" in text
        events = trace.read_jsonl(str(out_path))
        assert events

    def test_repeat_runs_are_byte_identical(self, tmp_path, scenario_file):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_cli("run", "--scenario", scenario_file, "--out", a, "--seed", 7)
        run_cli("run", "--scenario", scenario_file, "--out", b, "--seed", 7)
        assert a.read_bytes() == b.read_bytes()

    def test_snapshot_dot_files_written(self, tmp_path, scenario_file):
        out_path = tmp_path / "trace.jsonl"
        code, _ = run_cli(
            "run", "--scenario", scenario_file, "--out", out_path, "--snapshots", "5"
        )
        assert code == EXIT_OK
        dots = sorted(tmp_path.glob("trace.step5.s*.dot"))
        assert len(dots) == 4
        assert dots[0].read_text().startswith("digraph blockdag")

    def test_bad_server_count_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"n": 5, "f": 1, "seed": 0, "max_steps": 4}))
        code, text = run_cli("run", "--scenario", bad, "--out", tmp_path / "t.jsonl")
        assert code == EXIT_CONFIG
        assert "3f + 1" in text

    def test_unreadable_scenario_is_config_error(self, tmp_path):
        code, _ = run_cli(
            "run", "--scenario", tmp_path / "missing.json", "--out", tmp_path / "t.jsonl"
        )
        assert code == EXIT_CONFIG


class TestCheck:
    def test_clean_trace_exits_zero(self, tmp_path, scenario_file):
        out_path = tmp_path / "trace.jsonl"
        run_cli("run", "--scenario", scenario_file, "--out", out_path)
        code, text = run_cli("check", "--trace", out_path, "--scenario", scenario_file)
        assert code == EXIT_OK
        assert text.count("PASS") == 4

    def test_subset_of_props(self, tmp_path, scenario_file):
        out_path = tmp_path / "trace.jsonl"
        run_cli("run", "--scenario", scenario_file, "--out", out_path)
        code, text = run_cli(
            "check", "--trace", out_path, "--scenario", scenario_file, "--props", "brb"
        )
        assert code == EXIT_OK
        assert text.count("PASS") == 1

    def test_violations_exit_one_and_name_the_problem(self, tmp_path, scenario_file):
        forged = tmp_path / "forged.jsonl"
        events = [
            trace.event(
                0,
                "INDICATE",
                server=0,
                label=[0, 1],
                indication="000000000000002a",
                on_behalf_of=0,
                block="aa" * 32,
                surfaced=True,
            )
        ]
        trace.write_jsonl(events, str(forged))
        code, text = run_cli("check", "--trace", forged, "--scenario", scenario_file)
        assert code == EXIT_VIOLATIONS
        assert "totality" in text

    def test_empty_trace_is_vacuously_clean(self, tmp_path, scenario_file):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code, text = run_cli("check", "--trace", empty, "--scenario", scenario_file)
        assert code == EXIT_OK
        assert "vacuous" in text

    def test_malformed_trace_reports_line_number(self, tmp_path, scenario_file):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"schema":1,"step":0,"kind":"SEND"}\nnot json\n')
        code, text = run_cli("check", "--trace", bad, "--scenario", scenario_file)
        assert code == EXIT_CONFIG
        assert "line 2" in text

    def test_unknown_prop_rejected(self, tmp_path, scenario_file):
        out_path = tmp_path / "trace.jsonl"
        run_cli("run", "--scenario", scenario_file, "--out", out_path)
        code, text = run_cli(
            "check", "--trace", out_path, "--scenario", scenario_file, "--props", "nope"
        )
        assert code == EXIT_CONFIG


def _insert(step, server, ref, builder, seqno, preds):
    return trace.event(
        step, "INSERT", server=server, ref=ref, builder=builder, seqno=seqno,
        preds=preds, requests=[],
    )


class TestExportDot:
    def test_three_block_trace_renders_three_nodes_two_edges(self, tmp_path):
        b1, b2, b3 = "aa" * 32, "bb" * 32, "cc" * 32
        events = [
            _insert(0, 1, b1, 0, 0, []),
            _insert(0, 1, b2, 1, 0, []),
            _insert(1, 1, b3, 0, 1, [b1, b2]),
        ]
        trace_path = tmp_path / "fig.jsonl"
        trace.write_jsonl(events, str(trace_path))
        out_path = tmp_path / "fig.dot"
        code, _ = run_cli("export-dot", "--trace", trace_path, "--out", out_path)
        assert code == EXIT_OK
        dot = out_path.read_text()
        assert dot.count("label=") == 3
        assert dot.count("->") == 2

    def test_fork_trace_renders_four_nodes_four_edges(self, tmp_path):
        b1, b2, b3, b4 = "aa" * 32, "bb" * 32, "cc" * 32, "dd" * 32
        events = [
            _insert(0, 2, b1, 0, 0, []),
            _insert(0, 2, b2, 1, 0, []),
            _insert(1, 2, b3, 0, 1, [b1, b2]),
            _insert(1, 2, b4, 0, 1, [b1, b2]),
        ]
        trace_path = tmp_path / "fork.jsonl"
        trace.write_jsonl(events, str(trace_path))
        out_path = tmp_path / "fork.dot"
        code, _ = run_cli("export-dot", "--trace", trace_path, "--out", out_path)
        assert code == EXIT_OK
        dot = out_path.read_text()
        assert dot.count("label=") == 4
        assert dot.count("->") == 4

    def test_deterministic_bytes(self, tmp_path, scenario_file):
        trace_path = tmp_path / "trace.jsonl"
        run_cli("run", "--scenario", scenario_file, "--out", trace_path)
        d1, d2 = tmp_path / "one.dot", tmp_path / "two.dot"
        run_cli("export-dot", "--trace", trace_path, "--out", d1)
        run_cli("export-dot", "--trace", trace_path, "--out", d2)
        assert d1.read_bytes() == d2.read_bytes()

    def test_trace_without_inserts_is_config_error(self, tmp_path):
        trace_path = tmp_path / "none.jsonl"
        trace.write_jsonl([trace.event(0, "DROP", server=0, reason="x")], str(trace_path))
        code, _ = run_cli("export-dot", "--trace", trace_path, "--out", tmp_path / "o.dot")
        assert code == EXIT_CONFIG


class TestCensus:
    def test_census_prints_counts(self, tmp_path, scenario_file):
        trace_path = tmp_path / "trace.jsonl"
        run_cli("run", "--scenario", scenario_file, "--out", trace_path)
        code, text = run_cli("census", "--trace", trace_path)
        assert code == EXIT_OK
        assert "block_envelopes:" in text
        assert "wire_protocol_messages: 0" in text

    def test_missing_subcommand_is_usage_error(self):
        code, _ = run_cli()
        assert code == EXIT_CONFIG
