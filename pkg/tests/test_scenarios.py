"""Scenario harness, counter-example reports, and flash-loan suite checks."""

from __future__ import annotations

import pytest
from dataclasses import replace

from txmonsim.checks import check_all
from txmonsim.contracts import BUILTINS, build
from txmonsim.core import ScenarioError
from txmonsim.scenarios import (
    ObsClaim,
    QueueClaim,
    VerdictClaim,
    build_scenario,
    check_obs_equivalence,
    counterexample_suite,
    observations_of,
    reason_kind,
    run_bfs_only_once,
    run_bfs_queue_gap,
    run_dfs_fail_queue,
    run_dfs_no_queue,
    run_dfs_only_once,
    run_flashloan_suite,
    verify_report,
)


def test_every_builtin_constructs():
    for name in BUILTINS:
        params = {
            "l1": "L1", "l2": "L2", "l": "L1", "sink": "S",
            "amount": 10, "amount1": 10, "amount2": 20, "repay_amount": 5,
        }
        built = build(name, params, 50)
        assert built.contract.step is not None


def test_unknown_builtin_is_a_scenario_error():
    with pytest.raises(ScenarioError):
        build("no_such_contract", {}, 0)


# ---------------------------------------------------------------------------
# observational equivalence checker


def test_identical_traces_are_equal_at_all_indices():
    report = run_dfs_only_once()
    t = report.traces["o1"]
    res = check_obs_equivalence(t, t, "A", upto=None)
    assert res.equal


def test_divergence_is_pinpointed_one_past_the_shared_prefix():
    report = run_dfs_only_once()
    res = check_obs_equivalence(report.traces["o1"], report.traces["o2"], "A", upto=2)
    assert not res.equal
    assert res.divergence.invocation == 2
    assert res.divergence.field == "presence"


def test_observations_carry_only_queried_readings():
    report = run_dfs_no_queue()
    obs = observations_of(report.traces["busy_plain"], "A")
    assert obs[0].readings == {}
    probed = observations_of(report.traces["quiet_probed"], "A")
    assert "queue" in probed[0].readings


# ---------------------------------------------------------------------------
# counter-example reports


def test_counterexample_suite_builds_and_self_certifies():
    reports = counterexample_suite()
    assert [r.name for r in reports] == [
        "dfs_only_once",
        "dfs_no_queue",
        "dfs_fail_queue",
        "bfs_only_once",
        "bfs_queue_gap",
    ]
    for report in reports:
        assert verify_report(report) == []


def test_verify_report_detects_falsified_claims():
    report = run_dfs_only_once()
    bad_obs = replace(
        report,
        obs_claims=(ObsClaim("o1", "o2", "A", upto=2, expect_equal=True),),
    )
    assert verify_report(bad_obs)
    bad_queue = replace(report, queue_claims=(QueueClaim("o1", (("C.ping",),)),))
    assert verify_report(bad_queue)
    bad_verdict = replace(report, verdict_claims=(VerdictClaim("o2", "gas_exhausted"),))
    assert verify_report(bad_verdict)


def test_dfs_only_once_report_verdicts():
    report = run_dfs_only_once()
    assert reason_kind(report.verdicts["o1"]) == "monitor_term_fail"
    assert reason_kind(report.verdicts["o2"]) == "committed"


def test_bfs_only_once_strategy_verdicts_show_the_trap():
    report = run_bfs_only_once()
    assert reason_kind(report.verdicts["t"]) == "gas_exhausted"
    for key in ("t0", "t1", "t2"):
        assert reason_kind(report.verdicts[key]) == "committed"
    # the strategy starves the three-call transaction the monitor accepts
    assert reason_kind(report.verdicts["t_prime0"]) == "gas_exhausted"
    assert reason_kind(report.verdicts["t_prime0_native"]) == "committed"


def test_bfs_queue_gap_prober_separates_exactly_the_busy_run():
    report = run_bfs_queue_gap()
    assert reason_kind(report.verdicts["busy_probed"]) == "contract_fail"
    assert reason_kind(report.verdicts["quiet_probed"]) == "committed"


def test_fail_queue_policy_handles_pairs_but_not_three_calls():
    report = run_dfs_fail_queue()
    assert reason_kind(report.verdicts["o1"]) == "fail_bit_set"
    assert reason_kind(report.verdicts["o2"]) == "committed"
    assert reason_kind(report.verdicts["seq_o2"]) == "committed"
    assert reason_kind(report.verdicts["seq_o1"]) == "fail_bit_set"
    assert reason_kind(report.verdicts["o3"]) == "fail_bit_set"
    assert reason_kind(report.verdicts["o3_native"]) == "committed"


# ---------------------------------------------------------------------------
# flash-loan suite


def test_flashloan_cross_implementation_agreement():
    fl = run_flashloan_suite()
    for scenario, verdicts in fl.agreement().items():
        assert len(verdicts) == 1, f"{scenario} splits across variants: {verdicts}"


def test_flashloan_safety_holds_on_every_committed_run():
    fl = run_flashloan_suite()
    assert fl.safety_violations() == []


def test_flashloan_rows_match_their_declared_expectations():
    fl = run_flashloan_suite()
    assert fl.wrong_verdicts() == []
    assert fl.ok


def test_flashloan_expected_verdicts():
    fl = run_flashloan_suite()
    by_key = {(r.scenario, r.variant): r for r in fl.rows}
    assert by_key[("two_loans_repaid", "trmon@dfs")].committed
    assert by_key[("two_loans_flat@dfs", "trmon@dfs")].committed
    assert by_key[("two_loans_flat@dfs", "trmon@dfs")].lender_balances_post == (100, 200)
    assert not by_key[("malicious_unpaid", "trmon@dfs")].committed
    assert by_key[("malicious_unpaid", "trmon@dfs")].outcome_kind == "monitor_term_fail"
    assert not by_key[("two_loans_flat@dfs(naive)", "naive@dfs")].committed
    assert not by_key[("partial_repay", "bfs_queue@bfs")].committed


def test_flashloan_traces_satisfy_global_invariants():
    from txmonsim.scenarios import LENDER_VARIANTS, _loan_scenario, run_scenario

    spec = _loan_scenario(
        LENDER_VARIANTS[-1], "client_two_loans_staged",
        {"l1": "L1", "l2": "L2", "sink": "S", "amount1": 100, "amount2": 200},
    )
    state, registry = build_scenario(spec)
    result = run_scenario(spec, debug=True)
    assert result.all_committed
    for tx in result.results:
        assert check_all(registry, state, tx) == []
        state = tx.outcome.final
