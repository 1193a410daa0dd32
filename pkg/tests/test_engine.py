"""Engine semantics: operation execution, queue disciplines, gas, atomicity."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import emitting_contract, external, inert_contract
from txmonsim.checks import check_all, check_atomicity, check_queue_laws, check_replay
from txmonsim.contracts import build, call, callspec
from txmonsim.core import (
    Aborted,
    Account,
    ChainState,
    Committed,
    ContractFail,
    Context,
    GasExhausted,
    InsufficientBalance,
    Operation,
    RecurringEscape,
    ScenarioError,
    SchedulerKind,
    StepOk,
    UNIT,
    VAddr,
    VAmt,
    VRec,
    VSeq,
    digest,
)
from txmonsim.core import ContractDef
from txmonsim.engine import EMIT_COST, Engine, EngineConfig, OP_COST, charge_gas


def run_one(registry, state, op, scheduler=SchedulerKind.DFS, gas=100, **cfg):
    engine = Engine(registry, EngineConfig(scheduler=scheduler, gas_limit=gas, **cfg), debug=True)
    return engine.run_transaction(state, op)


# ---------------------------------------------------------------------------
# charge_gas


def test_charge_gas_boundary_exact():
    ctx = Context(gas_remaining=5)
    out = charge_gas(ctx, 5)
    assert out is not None and out.gas_remaining == 0


def test_charge_gas_unaffordable():
    assert charge_gas(Context(gas_remaining=4), 5) is None


def test_cost_model_three_ops_two_emissions_consume_five():
    # Oracle: 3 executed operations and 2 emissions at one unit each.
    expected = 3 * OP_COST + 2 * EMIT_COST
    registry = {
        "B": build("forwarder_B", {}, 0).contract,
        "A": build("sink_C", {}, 0).contract,
        "C": build("sink_C", {}, 0).contract,
    }
    state = ChainState({a: Account() for a in registry} | {"ext": Account()})
    plan = VSeq((callspec("A"), callspec("C")))
    res = run_one(registry, state, external("B", "run", plan), gas=100)
    assert res.committed
    assert res.trace.records[-1].gas_after == 100 - expected


# ---------------------------------------------------------------------------
# execute_operation level behaviour


def test_insufficient_balance_aborts():
    registry = {"A": inert_contract()}
    state = ChainState({"A": Account(), "ext": Account(balance=100)})
    res = run_one(registry, state, external("A", money=150))
    assert isinstance(res.outcome, Aborted)
    assert isinstance(res.outcome.reason, InsufficientBalance)


def test_zero_money_step_keeps_balances():
    registry = {"A": inert_contract()}
    state = ChainState({"A": Account(balance=3), "ext": Account(balance=9)})
    res = run_one(registry, state, external("A", money=0))
    assert isinstance(res.outcome, Committed)
    assert res.outcome.final.balance("A") == 3
    assert res.outcome.final.balance("ext") == 9
    assert res.trace.records[0].emitted == ()


def test_lend_emits_one_transfer_of_the_amount():
    lender = build("lender_trmon", {}, 100)
    registry = {"L": lender.contract, "M": inert_contract()}
    state = ChainState({"L": Account(balance=100), "M": Account(), "ext": Account()})
    param = VRec({"dest": VAddr("M"), "amount": VAmt(100)})
    res = run_one(registry, state, external("L", "lend", param))
    assert res.committed
    first = res.trace.records[0]
    assert len(first.emitted) == 1
    op = first.emitted[0]
    assert (op.dest, op.src, op.money) == ("M", "L", 100)
    assert res.outcome.final.balance("M") == 100


def test_unknown_method_is_contract_fail():
    registry = {"L": build("lender_trmon", {}, 0).contract}
    state = ChainState({"L": Account(), "ext": Account()})
    res = run_one(registry, state, external("L", "no_such_method"))
    assert isinstance(res.outcome, Aborted)
    assert isinstance(res.outcome.reason, ContractFail)


def test_unregistered_destination_is_contract_fail():
    registry = {"B": emitting_contract(call("GHOST", "ping"))}
    state = ChainState({"B": Account(), "GHOST": Account(), "ext": Account()})
    res = run_one(registry, state, external("B"))
    assert isinstance(res.outcome, Aborted)
    assert isinstance(res.outcome.reason, ContractFail)
    assert res.outcome.reason.addr == "GHOST"


def test_recurring_escape_on_foreign_destination():
    bad = Operation(dest="C", src="", method="ping", recurring=True)
    registry = {"B": emitting_contract(bad), "C": inert_contract()}
    state = ChainState({"B": Account(), "C": Account(), "ext": Account()})
    res = run_one(registry, state, external("B"))
    assert isinstance(res.outcome, Aborted)
    assert isinstance(res.outcome.reason, RecurringEscape)


def test_recurring_ops_carry_no_money():
    def step(view, method, param, money, storage, balance):
        return StepOk(storage, (Operation(dest="B", src="", method="m", money=1, recurring=True),))

    registry = {"B": ContractDef(step=step, recurring_methods=frozenset({"m"}))}
    state = ChainState({"B": Account(balance=10), "ext": Account()})
    res = run_one(registry, state, external("B", "m"))
    assert isinstance(res.outcome, Aborted)
    assert isinstance(res.outcome.reason, RecurringEscape)


# ---------------------------------------------------------------------------
# Queue disciplines (exact shapes)


def _forwarders():
    registry = {
        "B": build("forwarder_B", {}, 0).contract,
        "A": build("forwarder_B", {}, 0).contract,
        "C": build("sink_C", {}, 0).contract,
    }
    state = ChainState({a: Account() for a in registry} | {"ext": Account()})
    return registry, state


def _labels(queue):
    return [f"{o.dest}.{o.method}" for o in queue]


def test_dfs_single_op_emitting_two():
    registry, state = _forwarders()
    plan = VSeq((callspec("A"), callspec("C")))
    res = run_one(registry, state, external("B", "run", plan))
    assert _labels(res.trace.records[0].queue_after) == ["A.ping", "C.ping"]


def test_dfs_emissions_prepend_with_pending_op():
    registry, state = _forwarders()
    child = VSeq((callspec("C", "ping"),))
    plan = VSeq((callspec("A", "run", child), callspec("A", "ping"), callspec("C", "ping")))
    res = run_one(registry, state, external("B", "run", plan))
    ops = res.trace.ops()
    assert _labels(ops[0].queue_after) == ["A.run", "A.ping", "C.ping"]
    assert _labels(ops[1].queue_after) == ["C.ping", "A.ping", "C.ping"]


def test_bfs_emissions_append():
    registry, state = _forwarders()
    child = VSeq((callspec("A", "ping"),))
    plan = VSeq((callspec("B", "run", child), callspec("A", "ping")))
    res = run_one(registry, state, external("B", "run", plan), scheduler=SchedulerKind.BFS)
    ops = res.trace.ops()
    # head B.run emits one op; the pending A.ping keeps its place at the front
    assert _labels(ops[1].queue_after) == ["A.ping", "A.ping"]


@given(
    scheduler=st.sampled_from([SchedulerKind.DFS, SchedulerKind.BFS]),
    shape=st.lists(st.integers(min_value=0, max_value=2), min_size=1, max_size=4),
)
@settings(max_examples=60, deadline=None)
def test_queue_laws_hold_on_random_plans(scheduler, shape):
    registry, state = _forwarders()
    plan = VSeq(
        tuple(
            callspec("A", "run", VSeq(tuple(callspec("C") for _ in range(n))))
            for n in shape
        )
    )
    res = run_one(registry, state, external("B", "run", plan), scheduler=scheduler, gas=500)
    assert res.committed
    assert check_queue_laws(res.trace) == []


# ---------------------------------------------------------------------------
# run_transaction


def test_single_step_drain_trace_length_one():
    registry = {"A": inert_contract()}
    state = ChainState({"A": Account(), "ext": Account()})
    res = run_one(registry, state, external("A"), gas=10)
    assert res.committed
    assert len(res.trace.records) == 1


def test_recurring_self_feeder_exhausts_gas():
    # Oracle: each step charges 1 to execute and 1 for its single emission,
    # so a gas meter of 50 admits exactly 25 completed steps.
    gas, steps = 50, 0
    while gas >= OP_COST + EMIT_COST:
        gas -= OP_COST + EMIT_COST
        steps += 1
    assert steps == 25

    def feeder(view, method, param, money, storage, balance):
        return StepOk(storage, (Operation(dest="R", src="", method="go", recurring=True),))

    registry = {"R": ContractDef(step=feeder, recurring_methods=frozenset({"go"}))}
    state = ChainState({"R": Account(), "ext": Account()})
    res = run_one(registry, state, external("R", "go"), gas=50)
    assert isinstance(res.outcome, Aborted)
    assert isinstance(res.outcome.reason, GasExhausted)
    assert len(res.trace.ops()) == steps


def test_gas_exhaustion_only_at_unaffordable_charge():
    registry = {"A": inert_contract()}
    state = ChainState({"A": Account(), "ext": Account()})
    res = run_one(registry, state, external("A"), gas=1)
    assert res.committed
    assert res.trace.records[-1].gas_after == 0


def test_external_validation():
    registry = {"A": inert_contract()}
    state = ChainState({"A": Account(), "ext": Account()})
    with pytest.raises(ScenarioError):
        run_one(registry, state, Operation(dest="A", src="nobody", method="ping"))
    with pytest.raises(ScenarioError):
        run_one(registry, state, Operation(dest="ext", src="ext", method="ping"))
    with pytest.raises(ScenarioError):
        run_one(registry, state, Operation(dest="A", src="A", method="ping"))


def test_determinism_identical_traces_on_rerun():
    registry, state = _forwarders()
    plan = VSeq((callspec("A", "run", VSeq((callspec("C"),))), callspec("C")))
    op = external("B", "run", plan)
    r1 = run_one(registry, state, op)
    r2 = run_one(registry, state, op)
    assert r1.trace == r2.trace
    assert [r.state_digest for r in r1.trace.records] == [
        r.state_digest for r in r2.trace.records
    ]


def test_atomicity_on_abort_preserves_pre_state():
    registry = {"A": inert_contract(), "B": emitting_contract(call("A", "ping", money=5))}
    state = ChainState({"A": Account(), "B": Account(balance=0), "ext": Account(balance=10)})
    pre_digest = digest(state)
    res = run_one(registry, state, external("B", money=0))
    assert isinstance(res.outcome, Aborted)
    assert check_atomicity(state, pre_digest, res) == []
    assert digest(state) == pre_digest


def test_conservation_and_full_checks_on_flashloan_run():
    from txmonsim.scenarios import LENDER_VARIANTS, _loan_scenario, build_scenario, run_scenario

    scenario = _loan_scenario(
        LENDER_VARIANTS[0], "client_two_loans_staged",
        {"l1": "L1", "l2": "L2", "sink": "S", "amount1": 100, "amount2": 200},
    )
    state, registry = build_scenario(scenario)
    result = run_scenario(scenario)
    assert result.all_committed
    for tx in result.results:
        assert check_all(registry, state, tx) == []


def test_replay_reproduces_recorded_steps():
    registry, state = _forwarders()
    plan = VSeq((callspec("A", "run", VSeq((callspec("C"),))), callspec("A", "ping")))
    res = run_one(registry, state, external("B", "run", plan))
    assert res.committed
    assert check_replay(registry, res.trace) == []


def test_nondeterministic_step_is_flagged_in_debug_runs():
    hits = []

    def flaky(view, method, param, money, storage, balance):
        hits.append(1)
        return StepOk(storage, ()) if len(hits) % 2 == 0 else StepOk(UNIT, ())

    registry = {"A": ContractDef(step=flaky)}
    state = ChainState({"A": Account(storage=VRec({})), "ext": Account()})
    with pytest.raises(ScenarioError):
        run_one(registry, state, external("A"))
