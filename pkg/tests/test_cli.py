"""Command-line behaviour: exit codes, trace round-trips, suites, reports."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from txmonsim.cli import main
from txmonsim.scenarios import run_dfs_only_once
from txmonsim.serialize import (
    dump_traces,
    load_traces,
    report_to_json,
    scenario_from_json,
    trace_from_json,
    trace_to_json,
)

TRMON_SCENARIO = {
    "engine": {"scheduler": "dfs", "gas_limit": 5000, "mechanisms": [], "monitor_mode": "transaction"},
    "contracts": [
        {"addr": "L1", "builtin": "lender_trmon", "balance": 100},
        {"addr": "L2", "builtin": "lender_trmon", "balance": 200},
        {
            "addr": "M",
            "builtin": "client_two_loans",
            "params": {"l1": "L1", "l2": "L2", "sink": "S", "amount1": 100, "amount2": 200},
        },
        {"addr": "S", "builtin": "invest_sink"},
    ],
    "externals": [{"addr": "ext", "balance": 0}],
    "transactions": [{"dest": "M", "method": "borrow_and_invest"}],
}

MALICIOUS_SCENARIO = {
    "engine": {"scheduler": "dfs", "gas_limit": 5000, "mechanisms": [], "monitor_mode": "transaction"},
    "contracts": [
        {"addr": "L1", "builtin": "lender_trmon", "balance": 100},
        {"addr": "M", "builtin": "client_malicious", "params": {"l": "L1", "sink": "S", "amount": 100}},
        {"addr": "S", "builtin": "invest_sink"},
    ],
    "externals": [{"addr": "ext", "balance": 0}],
    "transactions": [{"dest": "M", "method": "borrow_and_invest"}],
}


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_run_committed_scenario_exits_zero_and_writes_trace(runner, tmp_path):
    scenario = write(tmp_path, "ok.json", TRMON_SCENARIO)
    trace_path = tmp_path / "out.trace"
    result = runner.invoke(main, ["run", scenario, "--trace", str(trace_path)])
    assert result.exit_code == 0, result.output
    assert "committed" in result.output
    traces = load_traces(trace_path.read_text())
    assert len(traces) == 1
    kinds = {r.kind.value for r in traces[0].records}
    assert {"init", "op", "term"} <= kinds


def test_run_aborting_scenario_exits_one_with_reason(runner, tmp_path):
    scenario = write(tmp_path, "bad.json", MALICIOUS_SCENARIO)
    result = runner.invoke(main, ["run", scenario, "--format", "json"])
    assert result.exit_code == 1
    assert "monitor_term_fail" in result.output


def test_run_invalid_scenario_exits_two(runner, tmp_path):
    broken = dict(TRMON_SCENARIO, transactions=[{"dest": "GHOST", "method": "x"}])
    scenario = write(tmp_path, "broken.json", broken)
    result = runner.invoke(main, ["run", scenario])
    assert result.exit_code == 2
    missing = runner.invoke(main, ["run", str(tmp_path / "nowhere.json")])
    assert missing.exit_code == 2


def test_run_engine_overrides_change_the_outcome(runner, tmp_path):
    scenario = write(tmp_path, "ok.json", TRMON_SCENARIO)
    # the straight-line client cannot fund its investment under BFS ordering
    result = runner.invoke(main, ["run", scenario, "--scheduler", "bfs", "--format", "json"])
    assert result.exit_code == 1
    assert "insufficient_balance" in result.output


def test_trace_files_round_trip(runner, tmp_path):
    report = run_dfs_only_once()
    trace = report.traces["o2"]
    assert trace_from_json(trace_to_json(trace)) == trace
    text = dump_traces([trace])
    assert load_traces(text) == [trace]


def test_diff_trace_against_itself_is_zero(runner, tmp_path):
    scenario = write(tmp_path, "ok.json", TRMON_SCENARIO)
    t = tmp_path / "a.trace"
    runner.invoke(main, ["run", scenario, "--trace", str(t)])
    result = runner.invoke(main, ["diff", str(t), str(t)])
    assert result.exit_code == 0


def test_diff_malformed_trace_is_a_usage_error(runner, tmp_path):
    bad = tmp_path / "bad.trace"
    bad.write_text("not json\n")
    result = runner.invoke(main, ["diff", str(bad), str(bad)])
    assert result.exit_code == 2


def test_module_invocation_works():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-m", "txmonsim.cli", "--help"], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert "suite" in out.stdout


def test_diff_subject_prefix_equal_but_full_traces_diverge(runner, tmp_path):
    report = run_dfs_only_once()
    a = tmp_path / "o1.trace"
    b = tmp_path / "o2.trace"
    a.write_text(dump_traces([report.traces["o1"]]))
    b.write_text(dump_traces([report.traces["o2"]]))
    prefix = runner.invoke(main, ["diff", str(a), str(b), "--subject", "A", "--upto", "1"])
    assert prefix.exit_code == 0
    full = runner.invoke(main, ["diff", str(a), str(b), "--subject", "A"])
    assert full.exit_code == 1
    assert "invocation 2" in full.output
    records = runner.invoke(main, ["diff", str(a), str(b)])
    assert records.exit_code == 1


def test_suite_counterexamples_writes_five_reports(runner, tmp_path):
    result = runner.invoke(
        main, ["suite", "counterexamples", "--out", str(tmp_path)], catch_exceptions=False
    )
    assert result.exit_code == 0, result.output
    written = sorted(p.name for p in tmp_path.glob("*.json"))
    assert written == [
        "bfs_only_once.json",
        "bfs_queue_gap.json",
        "dfs_fail_queue.json",
        "dfs_no_queue.json",
        "dfs_only_once.json",
    ]


def test_suite_flashloan_agreement_table(runner, tmp_path):
    result = runner.invoke(main, ["suite", "flashloan", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "agreement: ok" in result.output
    assert (tmp_path / "flashloan.json").exists()


def test_suite_equivalence_small(runner, tmp_path):
    result = runner.invoke(
        main, ["suite", "equivalence", "--instances", "5", "--out", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    payload = json.loads((tmp_path / "equivalence.json").read_text())
    assert all(not c["failures"] for c in payload["cases"])


def test_explain_verifies_saved_reports(runner, tmp_path):
    report = run_dfs_only_once()
    path = tmp_path / "r.json"
    path.write_text(json.dumps(report_to_json(report)))
    result = runner.invoke(main, ["explain", str(path)])
    assert result.exit_code == 0
    assert "all claims verified" in result.output

    tampered = report_to_json(report)
    tampered["verdict_claims"][0]["expect"] = "committed"
    path.write_text(json.dumps(tampered))
    result = runner.invoke(main, ["explain", str(path)])
    assert result.exit_code == 1
    assert "VERIFICATION FAILED" in result.output


def test_suite_dir_env_var_is_honoured(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("TXMONSIM_SUITE_DIR", str(tmp_path / "bundles"))
    result = runner.invoke(main, ["suite", "flashloan"])
    assert result.exit_code == 0
    assert (tmp_path / "bundles" / "flashloan.json").exists()
    # scenario lookup falls back to the suite dir
    scenario_dir = tmp_path / "bundles"
    (scenario_dir / "s.json").write_text(json.dumps(TRMON_SCENARIO))
    result = runner.invoke(main, ["run", "s.json"])
    assert result.exit_code == 0


def test_scenario_parser_validates_shapes():
    spec = scenario_from_json(TRMON_SCENARIO)
    assert len(spec.contracts) == 4
    with pytest.raises(Exception):
        scenario_from_json({"engine": {}, "contracts": [{"addr": "A"}]})


FIXTURES = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.mark.parametrize(
    "fixture,exit_code,expect",
    [
        ("flashloan_trmon.json", 0, "committed"),
        ("flashloan_malicious.json", 1, "monitor_term_fail"),
        ("only_once_dfs.json", 1, "monitor_term_fail"),
        ("bfs_first_lender.json", 0, "committed"),
    ],
)
def test_shipped_scenario_fixtures(runner, fixture, exit_code, expect):
    result = runner.invoke(main, ["run", str(FIXTURES / fixture)])
    assert result.exit_code == exit_code, result.output
    assert expect in result.output
