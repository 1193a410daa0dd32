"""Scenario harness, counter-example reports, and the flash-loan suite.

A scenario declares contracts (by builtin name), external accounts, and a
sequence of externally issued transactions. Counter-example reports bundle the
traces of paired runs together with the claims that make them interesting:
queue shapes, observational equivalence of a chosen contract across runs, and
transaction verdicts. Every claim embedded in a report is recomputed from the
embedded traces by `verify_report`, so a report certifies itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .contracts import build, callspec
from .core import (
    Account,
    Address,
    ChainState,
    Committed,
    ContractFail,
    FailBitSet,
    GasExhausted,
    HookupFail,
    InsufficientBalance,
    Mechanism,
    MonitorBeginFail,
    MonitorEndFail,
    MonitorInitFail,
    MonitorMode,
    MonitorTermFail,
    Observation,
    Operation,
    Outcome,
    RecordKind,
    RecurringEscape,
    Registry,
    ScenarioError,
    SchedulerKind,
    Trace,
    UNIT,
    VAddr,
    VInt,
    VRec,
    VSeq,
    Value,
)
from .engine import Engine, EngineConfig, TxResult

# ---------------------------------------------------------------------------
# Scenario declarations and runner


@dataclass(frozen=True)
class ContractSpec:
    addr: Address
    builtin: str
    params: Mapping[str, object] = field(default_factory=dict)
    balance: int = 0
    storage: Optional[Value] = None
    monitor_storage: Optional[Value] = None


@dataclass(frozen=True)
class ExternalSpec:
    addr: Address
    balance: int = 0


@dataclass(frozen=True)
class TxSpec:
    dest: Address
    method: str
    param: Value = UNIT
    money: int = 0
    gas_limit: Optional[int] = None
    src: Optional[Address] = None


@dataclass(frozen=True)
class ScenarioSpec:
    engine: EngineConfig
    contracts: tuple[ContractSpec, ...]
    externals: tuple[ExternalSpec, ...]
    transactions: tuple[TxSpec, ...]

    def __post_init__(self) -> None:
        declared = {c.addr for c in self.contracts} | {e.addr for e in self.externals}
        if len(declared) != len(self.contracts) + len(self.externals):
            raise ScenarioError("duplicate addresses in scenario")
        if not self.externals:
            raise ScenarioError("scenario needs at least one external account")
        contract_addrs = {c.addr for c in self.contracts}
        for t in self.transactions:
            if t.dest not in contract_addrs:
                raise ScenarioError(f"transaction destination {t.dest!r} not a contract")
            if t.src is not None and t.src not in {e.addr for e in self.externals}:
                raise ScenarioError(f"transaction source {t.src!r} not an external account")


def build_scenario(spec: ScenarioSpec) -> tuple[ChainState, Registry]:
    registry = {}
    accounts = {}
    for c in spec.contracts:
        builtin = build(c.builtin, c.params, c.balance)
        registry[c.addr] = builtin.contract
        accounts[c.addr] = Account(
            storage=c.storage if c.storage is not None else builtin.storage,
            balance=c.balance,
            monitor_storage=(
                c.monitor_storage if c.monitor_storage is not None else builtin.monitor_storage
            ),
        )
    for e in spec.externals:
        accounts[e.addr] = Account(balance=e.balance)
    return ChainState(accounts), registry


@dataclass(frozen=True)
class ScenarioResult:
    spec: ScenarioSpec
    pre_state: ChainState
    final_state: ChainState
    results: tuple[TxResult, ...]

    @property
    def outcomes(self) -> tuple[Outcome, ...]:
        return tuple(r.outcome for r in self.results)

    @property
    def traces(self) -> tuple[Trace, ...]:
        return tuple(r.trace for r in self.results)

    @property
    def all_committed(self) -> bool:
        return all(r.committed for r in self.results)


def run_scenario(spec: ScenarioSpec, debug: bool = False) -> ScenarioResult:
    """Run the scenario's transactions in order; commits thread the state
    forward, aborts leave it untouched."""
    state, registry = build_scenario(spec)
    pre = state
    engine = Engine(registry, spec.engine, debug=debug)
    results = []
    for t in spec.transactions:
        src = t.src if t.src is not None else spec.externals[0].addr
        op = Operation(dest=t.dest, src=src, method=t.method, param=t.param, money=t.money)
        res = engine.run_transaction(state, op, gas_limit=t.gas_limit)
        results.append(res)
        if isinstance(res.outcome, Committed):
            state = res.outcome.final
    return ScenarioResult(spec, pre, state, tuple(results))


# ---------------------------------------------------------------------------
# Observations and observational equivalence


def observations_of(trace: Trace, subject: Address) -> tuple[Observation, ...]:
    out = []
    for r in trace.ops(subject):
        out.append(
            Observation(
                seq_no=len(out) + 1,
                method=r.executed.method,
                param=r.executed.param,
                money=r.executed.money,
                storage_before=r.storage_before,
                balance_seen=r.balance_seen,
                readings=dict(r.readings),
            )
        )
    return tuple(out)


@dataclass(frozen=True)
class Divergence:
    invocation: int
    field: str
    left: object
    right: object


@dataclass(frozen=True)
class EquivCheck:
    equal: bool
    checked: int
    divergence: Optional[Divergence] = None


def check_obs_equivalence(
    trace_a: Trace, trace_b: Trace, subject: Address, upto: Optional[int] = None
) -> EquivCheck:
    """Compare the observation sequences of `subject` across two traces,
    through invocation index `upto` (all invocations, including sequence
    length, when upto is None)."""
    obs_a = observations_of(trace_a, subject)
    obs_b = observations_of(trace_b, subject)
    span = max(len(obs_a), len(obs_b)) if upto is None else upto
    checked = 0
    for i in range(span):
        a = obs_a[i] if i < len(obs_a) else None
        b = obs_b[i] if i < len(obs_b) else None
        if a is None and b is None:
            break  # both runs stopped invoking the subject: vacuous agreement
        if a is None or b is None:
            return EquivCheck(False, checked, Divergence(i + 1, "presence", a, b))
        for f in ("method", "param", "money", "storage_before", "balance_seen", "readings"):
            if getattr(a, f) != getattr(b, f):
                return EquivCheck(
                    False, checked, Divergence(i + 1, f, getattr(a, f), getattr(b, f))
                )
        checked += 1
    return EquivCheck(True, checked)


# ---------------------------------------------------------------------------
# Counter-example reports


def reason_kind(outcome: Outcome) -> str:
    """Stable label of an outcome for claims and serialization."""
    stub = getattr(outcome, "kind", None)
    if isinstance(stub, str):
        return stub
    if isinstance(outcome, Committed):
        return "committed"
    reason = outcome.reason  # type: ignore[union-attr]
    return {
        ContractFail: "contract_fail",
        InsufficientBalance: "insufficient_balance",
        GasExhausted: "gas_exhausted",
        MonitorInitFail: "monitor_init_fail",
        MonitorBeginFail: "monitor_begin_fail",
        MonitorEndFail: "monitor_end_fail",
        MonitorTermFail: "monitor_term_fail",
        HookupFail: "hookup_fail",
        FailBitSet: "fail_bit_set",
        RecurringEscape: "recurring_escape",
    }[type(reason)]


def op_label(op: Operation) -> str:
    return f"{op.dest}.{op.method}"


def queue_labels(trace: Trace, steps: Optional[int] = None) -> tuple[tuple[str, ...], ...]:
    """queue_after of each operation record, as dest.method labels."""
    ops = trace.ops()
    if steps is not None:
        ops = ops[:steps]
    return tuple(tuple(op_label(o) for o in r.queue_after) for r in ops)


@dataclass(frozen=True)
class ObsClaim:
    trace_a: str
    trace_b: str
    subject: Address
    upto: Optional[int]
    expect_equal: bool
    note: str = ""


@dataclass(frozen=True)
class CrossObsClaim:
    """Two single invocations, possibly at different positions in different
    runs, present the same view to the contract."""

    trace_a: str
    invocation_a: int
    trace_b: str
    invocation_b: int
    subject: Address
    note: str = ""


@dataclass(frozen=True)
class QueueClaim:
    trace: str
    shapes: tuple[tuple[str, ...], ...]
    note: str = ""


@dataclass(frozen=True)
class VerdictClaim:
    trace: str
    expect: str
    note: str = ""


@dataclass(frozen=True)
class HookupInputClaim:
    """The storage hookup of `subject` ran on identical inputs in both runs."""

    trace_a: str
    trace_b: str
    subject: Address
    note: str = ""


@dataclass(frozen=True)
class CounterexampleReport:
    name: str
    traces: Mapping[str, Trace]
    verdicts: Mapping[str, Outcome]
    obs_claims: tuple[ObsClaim, ...] = ()
    cross_obs_claims: tuple[CrossObsClaim, ...] = ()
    queue_claims: tuple[QueueClaim, ...] = ()
    verdict_claims: tuple[VerdictClaim, ...] = ()
    hookup_claims: tuple[HookupInputClaim, ...] = ()
    conclusion: str = ""


def verify_report(report: CounterexampleReport) -> list[str]:
    """Recompute every claim from the embedded traces."""
    problems = []
    for qc in report.queue_claims:
        got = queue_labels(report.traces[qc.trace], steps=len(qc.shapes))
        if got != qc.shapes:
            problems.append(f"{report.name}/{qc.trace}: queue shapes {got} != {qc.shapes}")
    for oc in report.obs_claims:
        res = check_obs_equivalence(
            report.traces[oc.trace_a], report.traces[oc.trace_b], oc.subject, oc.upto
        )
        if res.equal != oc.expect_equal:
            problems.append(
                f"{report.name}: obs({oc.trace_a},{oc.trace_b},{oc.subject},upto={oc.upto})"
                f" = {res.equal}, expected {oc.expect_equal} ({res.divergence})"
            )
    for cc in report.cross_obs_claims:
        obs_a = observations_of(report.traces[cc.trace_a], cc.subject)
        obs_b = observations_of(report.traces[cc.trace_b], cc.subject)
        try:
            a = obs_a[cc.invocation_a - 1]
            b = obs_b[cc.invocation_b - 1]
        except IndexError:
            problems.append(f"{report.name}: cross-observation index out of range")
            continue
        if not a.same_view(b):
            problems.append(
                f"{report.name}: invocation {cc.invocation_a} of {cc.trace_a} and "
                f"invocation {cc.invocation_b} of {cc.trace_b} differ for {cc.subject}"
            )
    for vc in report.verdict_claims:
        got = reason_kind(report.verdicts[vc.trace])
        if got != vc.expect:
            problems.append(f"{report.name}/{vc.trace}: verdict {got} != {vc.expect}")
    for hc in report.hookup_claims:
        ha = [
            (r.storage_before, r.balance_seen)
            for r in report.traces[hc.trace_a].records
            if r.kind is RecordKind.HOOKUP and r.subject == hc.subject
        ]
        hb = [
            (r.storage_before, r.balance_seen)
            for r in report.traces[hc.trace_b].records
            if r.kind is RecordKind.HOOKUP and r.subject == hc.subject
        ]
        if not ha or ha != hb:
            problems.append(f"{report.name}: hookup inputs differ for {hc.subject}")
    return problems


def _certify(report: CounterexampleReport) -> CounterexampleReport:
    problems = verify_report(report)
    if problems:
        raise ScenarioError(f"report failed self-certification: {problems}")
    return report


# ---------------------------------------------------------------------------
# Counter-example suite

A, B, C, EXT = "A", "B", "C", "ext"


def _forward_plan(*specs: VRec) -> Value:
    return VSeq(tuple(specs))


def _single_tx(
    engine: EngineConfig,
    contracts: Sequence[ContractSpec],
    dest: Address,
    method: str,
    param: Value,
    gas: Optional[int] = None,
) -> ScenarioResult:
    spec = ScenarioSpec(
        engine=engine,
        contracts=tuple(contracts),
        externals=(ExternalSpec(EXT, 0),),
        transactions=(TxSpec(dest=dest, method=method, param=param, gas_limit=gas),),
    )
    return run_scenario(spec, debug=True)


def run_dfs_only_once() -> CounterexampleReport:
    """Under DFS, a one-call and a two-call transaction on a monitored
    contract present identical views to its first invocation even with first
    and queue info enabled, while the native transaction monitor tells them
    apart: reject one call, accept two."""
    engine = EngineConfig(
        scheduler=SchedulerKind.DFS,
        gas_limit=100,
        mechanisms=frozenset({Mechanism.FIRST, Mechanism.QUEUE}),
        monitor_mode=MonitorMode.TRANSACTION,
    )
    contracts = [
        ContractSpec(A, "once_monitored_A", {"probe": ("first", "queue")}),
        ContractSpec(B, "forwarder_B"),
        ContractSpec(C, "sink_C"),
    ]
    one = _forward_plan(callspec(A), callspec(C))
    two = _forward_plan(callspec(A), callspec(A), callspec(C))
    r1 = _single_tx(engine, contracts, B, "run", one)
    r2 = _single_tx(engine, contracts, B, "run", two)
    report = CounterexampleReport(
        name="dfs_only_once",
        traces={"o1": r1.traces[0], "o2": r2.traces[0]},
        verdicts={"o1": r1.outcomes[0], "o2": r2.outcomes[0]},
        queue_claims=(
            QueueClaim("o1", (("A.ping", "C.ping"),), "one call to A, then C"),
            QueueClaim("o2", (("A.ping", "A.ping", "C.ping"),), "two calls to A, then C"),
        ),
        obs_claims=(
            ObsClaim(
                "o1", "o2", A, upto=1, expect_equal=True,
                note="first invocation of A sees the same view in both runs, "
                "first and queue info included (the pending C call keeps queue "
                "info false in both)",
            ),
            ObsClaim(
                "o1", "o2", A, upto=2, expect_equal=False,
                note="one step past the shared prefix the runs differ",
            ),
        ),
        verdict_claims=(
            VerdictClaim("o1", "monitor_term_fail", "exactly one call is rejected"),
            VerdictClaim("o2", "committed", "two calls are accepted"),
        ),
        conclusion=(
            "The first invocation of A cannot tell the rejected run from the "
            "accepted one, so no contract-side decision at that point can "
            "implement the monitor; the native transaction monitor separates "
            "the runs only because term executes after the drain."
        ),
    )
    return _certify(report)


def run_dfs_no_queue() -> CounterexampleReport:
    """Under DFS, a contract cannot learn whether unrelated work is pending:
    with queue info disabled its observations coincide across runs that differ
    exactly in a pending third-party call; with queue info enabled a prober
    separates the same two runs."""
    plain_engine = EngineConfig(scheduler=SchedulerKind.DFS, gas_limit=100)
    probe_engine = EngineConfig(
        scheduler=SchedulerKind.DFS, gas_limit=100, mechanisms=frozenset({Mechanism.QUEUE})
    )
    plain = [
        ContractSpec(A, "sink_C"),
        ContractSpec(B, "forwarder_B"),
        ContractSpec(C, "sink_C"),
    ]
    probing = [
        ContractSpec(A, "queue_prober_A"),
        ContractSpec(B, "forwarder_B"),
        ContractSpec(C, "sink_C"),
    ]
    busy = _forward_plan(callspec(A), callspec(C))
    quiet = _forward_plan(callspec(A))
    p1 = _single_tx(plain_engine, plain, B, "run", busy)
    p2 = _single_tx(plain_engine, plain, B, "run", quiet)
    q1 = _single_tx(probe_engine, probing, B, "run", busy)
    q2 = _single_tx(probe_engine, probing, B, "run", quiet)
    report = CounterexampleReport(
        name="dfs_no_queue",
        traces={
            "busy_plain": p1.traces[0],
            "quiet_plain": p2.traces[0],
            "busy_probed": q1.traces[0],
            "quiet_probed": q2.traces[0],
        },
        verdicts={
            "busy_plain": p1.outcomes[0],
            "quiet_plain": p2.outcomes[0],
            "busy_probed": q1.outcomes[0],
            "quiet_probed": q2.outcomes[0],
        },
        queue_claims=(
            QueueClaim("busy_plain", (("A.ping", "C.ping"),)),
            QueueClaim("quiet_plain", (("A.ping",),)),
        ),
        obs_claims=(
            ObsClaim(
                "busy_plain", "quiet_plain", A, upto=1, expect_equal=True,
                note="without queue info, A's invocation is blind to the pending C call",
            ),
        ),
        verdict_claims=(
            VerdictClaim("busy_probed", "contract_fail", "prober vetoes the busy queue"),
            VerdictClaim("quiet_probed", "committed", "prober passes the quiet queue"),
        ),
        conclusion=(
            "A contract that must fail exactly when other work is pending is "
            "realizable with queue info and unrealizable without it: the two "
            "runs give its only invocation identical views."
        ),
    )
    return _certify(report)


def run_dfs_fail_queue() -> CounterexampleReport:
    """Fail bits plus queue info under DFS still cannot express the only-once
    check. The canonical bit policy (raise on odd lifetime call parity) gets
    one-call, two-call and committed-then-one-call sequences right, but any
    policy is already committed at the first invocation — the parity policy
    betrays itself on a three-call transaction the monitor would accept."""
    engine = EngineConfig(
        scheduler=SchedulerKind.DFS,
        gas_limit=100,
        mechanisms=frozenset({Mechanism.FAIL, Mechanism.QUEUE}),
    )
    native_engine = EngineConfig(
        scheduler=SchedulerKind.DFS, gas_limit=100, monitor_mode=MonitorMode.TRANSACTION
    )
    contracts = [
        ContractSpec(A, "parity_fail_A", {"probe": ("queue",)}),
        ContractSpec(B, "forwarder_B"),
        ContractSpec(C, "sink_C"),
    ]
    native_contracts = [
        ContractSpec(A, "once_monitored_A"),
        ContractSpec(B, "forwarder_B"),
        ContractSpec(C, "sink_C"),
    ]

    def plan(calls: int) -> Value:
        return _forward_plan(*([callspec(A)] * calls), callspec(C))

    o1 = _single_tx(engine, contracts, B, "run", plan(1))
    o2 = _single_tx(engine, contracts, B, "run", plan(2))
    o3 = _single_tx(engine, contracts, B, "run", plan(3))
    o3_native = _single_tx(native_engine, native_contracts, B, "run", plan(3))
    seq_spec = ScenarioSpec(
        engine=engine,
        contracts=tuple(contracts),
        externals=(ExternalSpec(EXT, 0),),
        transactions=(
            TxSpec(dest=B, method="run", param=plan(2)),
            TxSpec(dest=B, method="run", param=plan(1)),
        ),
    )
    seq = run_scenario(seq_spec, debug=True)
    report = CounterexampleReport(
        name="dfs_fail_queue",
        traces={
            "o1": o1.traces[0],
            "o2": o2.traces[0],
            "o3": o3.traces[0],
            "o3_native": o3_native.traces[0],
            "seq_o2": seq.traces[0],
            "seq_o1": seq.traces[1],
        },
        verdicts={
            "o1": o1.outcomes[0],
            "o2": o2.outcomes[0],
            "o3": o3.outcomes[0],
            "o3_native": o3_native.outcomes[0],
            "seq_o2": seq.outcomes[0],
            "seq_o1": seq.outcomes[1],
        },
        obs_claims=(
            ObsClaim(
                "o1", "o2", A, upto=1, expect_equal=True,
                note="queue info reads false in both runs (C is pending), so the "
                "policy's first decision is forced to coincide",
            ),
        ),
        verdict_claims=(
            VerdictClaim("o1", "fail_bit_set", "one call rejected, as required"),
            VerdictClaim("o2", "committed", "two calls accepted, as required"),
            VerdictClaim("seq_o2", "committed", "committed two-call transaction"),
            VerdictClaim("seq_o1", "fail_bit_set", "following one-call transaction rejected"),
            VerdictClaim("o3", "fail_bit_set", "three calls wrongly rejected by the policy"),
            VerdictClaim("o3_native", "committed", "the monitor accepts three calls"),
        ),
        conclusion=(
            "Because the first invocation's view coincides across runs, a "
            "fail-bit policy must commit to raising the bit there; keeping the "
            "bit equal to lifetime call parity survives the paired sequences "
            "but misjudges a three-call transaction, which the native monitor "
            "accepts."
        ),
    )
    return _certify(report)


def run_bfs_only_once() -> CounterexampleReport:
    """Under BFS a recurring watcher implements the only-once rejection for
    one- and two-call transactions, but a third call is indistinguishable from
    a fresh first call after a committed two-call transaction, so the watcher
    starves a transaction the monitor would accept."""
    engine = EngineConfig(scheduler=SchedulerKind.BFS, gas_limit=200)
    native_engine = EngineConfig(
        scheduler=SchedulerKind.BFS, gas_limit=200, monitor_mode=MonitorMode.TRANSACTION
    )
    contracts = [
        ContractSpec(A, "once_recurring_A"),
        ContractSpec(B, "recursive_f"),
    ]
    native_contracts = [
        ContractSpec(A, "once_monitored_A"),
        ContractSpec(B, "recursive_f"),
    ]

    def start(k: int) -> Value:
        return VRec({"k": VInt(k), "a": VAddr(A)})

    single = VRec({"a": VAddr(A)})
    t = _single_tx(engine, contracts, B, "call_a", single)
    t0 = _single_tx(engine, contracts, B, "start", start(0))
    t1 = _single_tx(engine, contracts, B, "start", start(1))
    t2 = _single_tx(engine, contracts, B, "start", start(2))
    tp0 = _single_tx(engine, contracts, B, "start3", single)
    t_native = _single_tx(native_engine, native_contracts, B, "call_a", single)
    tp0_native = _single_tx(native_engine, native_contracts, B, "start3", single)
    seq_spec = ScenarioSpec(
        engine=engine,
        contracts=tuple(contracts),
        externals=(ExternalSpec(EXT, 0),),
        transactions=(
            TxSpec(dest=B, method="start", param=start(0)),
            TxSpec(dest=B, method="call_a", param=single),
        ),
    )
    seq = run_scenario(seq_spec, debug=True)
    report = CounterexampleReport(
        name="bfs_only_once",
        traces={
            "t": t.traces[0],
            "t0": t0.traces[0],
            "t1": t1.traces[0],
            "t2": t2.traces[0],
            "t_prime0": tp0.traces[0],
            "t_native": t_native.traces[0],
            "t_prime0_native": tp0_native.traces[0],
            "seq_t0": seq.traces[0],
            "seq_t": seq.traces[1],
        },
        verdicts={
            "t": t.outcomes[0],
            "t0": t0.outcomes[0],
            "t1": t1.outcomes[0],
            "t2": t2.outcomes[0],
            "t_prime0": tp0.outcomes[0],
            "t_native": t_native.outcomes[0],
            "t_prime0_native": tp0_native.outcomes[0],
            "seq_t0": seq.outcomes[0],
            "seq_t": seq.outcomes[1],
        },
        queue_claims=(
            QueueClaim("t", (("A.ping",),), "single direct call"),
            QueueClaim(
                "t0",
                (
                    ("B.f", "A.ping"),
                    ("A.ping", "A.ping"),
                    ("A.ping", "A.watch"),
                    ("A.watch",),
                ),
                "depth-0 recursion: the second call lands behind the first",
            ),
            QueueClaim(
                "t1",
                (
                    ("B.f", "A.ping"),
                    ("A.ping", "B.f"),
                    ("B.f", "A.watch"),
                    ("A.watch", "A.ping"),
                ),
                "depth-1 recursion interleaves with the watcher",
            ),
            QueueClaim(
                "t_prime0",
                (
                    ("B.f", "A.ping", "B.f"),
                    ("A.ping", "B.f", "A.ping"),
                    ("B.f", "A.ping", "A.watch"),
                    ("A.ping", "A.watch", "A.ping"),
                ),
                "three calls: the last one runs after the watcher stopped",
            ),
        ),
        cross_obs_claims=(
            CrossObsClaim(
                "t_prime0", 4, "seq_t", 1, A,
                note="the third call of the three-call transaction and a fresh "
                "first call after the committed two-call transaction present "
                "identical views (both are ping invocations #4 and #1 "
                "respectively, with storage counter at two)",
            ),
        ),
        verdict_claims=(
            VerdictClaim("t", "gas_exhausted", "one call starved out: correct rejection"),
            VerdictClaim("t0", "committed", "two calls accepted"),
            VerdictClaim("t1", "committed", "two calls accepted"),
            VerdictClaim("t2", "committed", "two calls accepted"),
            VerdictClaim("seq_t0", "committed", "two-call transaction commits"),
            VerdictClaim("seq_t", "gas_exhausted", "following one-call transaction rejected"),
            VerdictClaim(
                "t_prime0", "gas_exhausted",
                "three calls wrongly starved by the same strategy",
            ),
            VerdictClaim("t_native", "monitor_term_fail", "monitor rejects one call"),
            VerdictClaim("t_prime0_native", "committed", "monitor accepts three calls"),
        ),
        conclusion=(
            "The recurring watcher separates one from two calls by starving "
            "transactions whose call parity stays odd, but the third call of "
            "the three-call transaction sees exactly the view of a fresh first "
            "call after a committed two-call transaction; behaving identically "
            "on both, the strategy must starve one transaction the monitor "
            "accepts. The watcher here stops at its first run after the parity "
            "moves; delaying the stop by any finite number of re-injections "
            "only shifts where the trapped third call is placed, so this run "
            "exhibits one representative of the strategy space rather than "
            "exhausting it."
        ),
    )
    return _certify(report)


def run_bfs_queue_gap() -> CounterexampleReport:
    """Under BFS, an unbounded storage hookup cannot stand in for queue info:
    with queue info disabled the probed contract (and its hookup) receives
    identical inputs across runs that differ in a pending third-party call;
    with queue info enabled a prober separates them."""
    plain_engine = EngineConfig(
        scheduler=SchedulerKind.BFS, gas_limit=100, mechanisms=frozenset({Mechanism.USTORE})
    )
    probe_engine = EngineConfig(
        scheduler=SchedulerKind.BFS, gas_limit=100, mechanisms=frozenset({Mechanism.QUEUE})
    )
    plain = [
        ContractSpec(A, "ustore_echo_A"),
        ContractSpec(B, "forwarder_B"),
        ContractSpec(C, "sink_C"),
    ]
    probing = [
        ContractSpec(A, "queue_prober_A"),
        ContractSpec(B, "forwarder_B"),
        ContractSpec(C, "sink_C"),
    ]
    busy = _forward_plan(callspec(A), callspec(C))
    quiet = _forward_plan(callspec(A))
    p1 = _single_tx(plain_engine, plain, B, "run", busy)
    p2 = _single_tx(plain_engine, plain, B, "run", quiet)
    q1 = _single_tx(probe_engine, probing, B, "run", busy)
    q2 = _single_tx(probe_engine, probing, B, "run", quiet)
    report = CounterexampleReport(
        name="bfs_queue_gap",
        traces={
            "busy_plain": p1.traces[0],
            "quiet_plain": p2.traces[0],
            "busy_probed": q1.traces[0],
            "quiet_probed": q2.traces[0],
        },
        verdicts={
            "busy_plain": p1.outcomes[0],
            "quiet_plain": p2.outcomes[0],
            "busy_probed": q1.outcomes[0],
            "quiet_probed": q2.outcomes[0],
        },
        obs_claims=(
            ObsClaim(
                "busy_plain", "quiet_plain", A, upto=1, expect_equal=True,
                note="without queue info A's only invocation is blind to the pending call",
            ),
        ),
        hookup_claims=(
            HookupInputClaim(
                "busy_plain", "quiet_plain", A,
                note="the unbounded hookup also runs on identical storage and balance",
            ),
        ),
        verdict_claims=(
            VerdictClaim("busy_probed", "contract_fail", "prober vetoes the busy queue"),
            VerdictClaim("quiet_probed", "committed", "prober passes the quiet queue"),
        ),
        conclusion=(
            "Since both the invocation of A and its storage hookup receive "
            "identical inputs in the two runs, any hookup-based strategy "
            "treats them alike, while queue info separates them."
        ),
    )
    return _certify(report)


def counterexample_suite() -> list[CounterexampleReport]:
    return [
        run_dfs_only_once(),
        run_dfs_no_queue(),
        run_dfs_fail_queue(),
        run_bfs_only_once(),
        run_bfs_queue_gap(),
    ]


# ---------------------------------------------------------------------------
# Flash-loan suite


@dataclass(frozen=True)
class LenderVariant:
    label: str
    builtin: str
    scheduler: SchedulerKind
    mechanisms: frozenset[Mechanism] = frozenset()
    monitor_mode: MonitorMode = MonitorMode.NONE


LENDER_VARIANTS: tuple[LenderVariant, ...] = (
    LenderVariant("trmon@dfs", "lender_trmon", SchedulerKind.DFS, monitor_mode=MonitorMode.TRANSACTION),
    LenderVariant("trmon@bfs", "lender_trmon", SchedulerKind.BFS, monitor_mode=MonitorMode.TRANSACTION),
    LenderVariant("ustore@dfs", "lender_ustore", SchedulerKind.DFS, frozenset({Mechanism.USTORE})),
    LenderVariant("ustore@bfs", "lender_ustore", SchedulerKind.BFS, frozenset({Mechanism.USTORE})),
    LenderVariant("first_fail@dfs", "lender_first_fail", SchedulerKind.DFS, frozenset({Mechanism.FIRST, Mechanism.FAIL})),
    LenderVariant("first_fail@bfs", "lender_first_fail", SchedulerKind.BFS, frozenset({Mechanism.FIRST, Mechanism.FAIL})),
    LenderVariant("bfs_first@bfs", "lender_bfs_first", SchedulerKind.BFS, frozenset({Mechanism.FIRST})),
    LenderVariant("bfs_queue@bfs", "lender_bfs_queue", SchedulerKind.BFS, frozenset({Mechanism.QUEUE})),
)

L1, L2, CLIENT, SINK = "L1", "L2", "M", "S"
FLASHLOAN_GAS = 5_000


def _loan_scenario(variant: LenderVariant, client_builtin: str, client_params: dict) -> ScenarioSpec:
    lenders = [ContractSpec(L1, variant.builtin, balance=100)]
    if "l2" in client_params:
        lenders.append(ContractSpec(L2, variant.builtin, balance=200))
    return ScenarioSpec(
        engine=EngineConfig(
            scheduler=variant.scheduler,
            gas_limit=FLASHLOAN_GAS,
            mechanisms=variant.mechanisms,
            monitor_mode=variant.monitor_mode,
        ),
        contracts=tuple(
            lenders
            + [
                ContractSpec(CLIENT, client_builtin, client_params),
                ContractSpec(SINK, "invest_sink"),
            ]
        ),
        externals=(ExternalSpec(EXT, 0),),
        transactions=(TxSpec(dest=CLIENT, method="borrow_and_invest"),),
    )


STAGED_CLIENTS: tuple[tuple[str, str, dict, bool], ...] = (
    # (row label, client builtin, params, expect commit)
    (
        "two_loans_repaid",
        "client_two_loans_staged",
        {"l1": L1, "l2": L2, "sink": SINK, "amount1": 100, "amount2": 200},
        True,
    ),
    (
        "malicious_unpaid",
        "client_malicious",
        {"l": L1, "sink": SINK, "amount": 100},
        False,
    ),
    (
        "partial_repay",
        "client_partial",
        {"l": L1, "sink": SINK, "amount": 100, "repay_amount": 60},
        False,
    ),
)


@dataclass(frozen=True)
class FlashLoanRow:
    scenario: str
    variant: str
    outcome_kind: str
    committed: bool
    expected_commit: bool
    lender_balances_pre: tuple[int, ...]
    lender_balances_post: tuple[int, ...]
    safety_ok: bool


@dataclass(frozen=True)
class FlashLoanReport:
    rows: tuple[FlashLoanRow, ...]

    def agreement(self) -> dict[str, set[bool]]:
        """Per logical scenario, the set of commit verdicts across variants;
        singleton sets mean every lender implementation agrees."""
        table: dict[str, set[bool]] = {}
        for row in self.rows:
            table.setdefault(row.scenario, set()).add(row.committed)
        return table

    def safety_violations(self) -> list[FlashLoanRow]:
        return [r for r in self.rows if not r.safety_ok]

    def wrong_verdicts(self) -> list[FlashLoanRow]:
        return [r for r in self.rows if r.committed != r.expected_commit]

    @property
    def ok(self) -> bool:
        return (
            not self.wrong_verdicts()
            and not self.safety_violations()
            and all(len(v) == 1 for v in self.agreement().values())
        )


def _flashloan_row(
    scenario: str, variant_label: str, spec: ScenarioSpec, expected_commit: bool
) -> FlashLoanRow:
    lender_addrs = [c.addr for c in spec.contracts if c.builtin.startswith("lender")]
    result = run_scenario(spec)
    pre = tuple(result.pre_state.balance(a) for a in lender_addrs)
    post = tuple(result.final_state.balance(a) for a in lender_addrs)
    committed = result.all_committed
    safety_ok = (not committed) or all(b >= a for a, b in zip(pre, post))
    return FlashLoanRow(
        scenario=scenario,
        variant=variant_label,
        outcome_kind=reason_kind(result.outcomes[0]),
        committed=committed,
        expected_commit=expected_commit,
        lender_balances_pre=pre,
        lender_balances_post=post,
        safety_ok=safety_ok,
    )


def run_flashloan_suite() -> FlashLoanReport:
    """Every lender variant against every client pattern, plus the DFS
    straight-line client rows showing the defensive lender's liveness gap."""
    rows = []
    for scenario, client, params, expected in STAGED_CLIENTS:
        for variant in LENDER_VARIANTS:
            rows.append(
                _flashloan_row(
                    scenario, variant.label, _loan_scenario(variant, client, params), expected
                )
            )

    flat_params = {"l1": L1, "l2": L2, "sink": SINK, "amount1": 100, "amount2": 200}
    trmon = LENDER_VARIANTS[0]
    naive = LenderVariant("naive@dfs", "lender_naive", SchedulerKind.DFS)
    rows.append(
        _flashloan_row(
            "two_loans_flat@dfs",
            trmon.label,
            _loan_scenario(trmon, "client_two_loans", flat_params),
            expected_commit=True,
        )
    )
    rows.append(
        _flashloan_row(
            "two_loans_flat@dfs(naive)",
            naive.label,
            _loan_scenario(naive, "client_two_loans", flat_params),
            expected_commit=False,
        )
    )
    rows.append(
        _flashloan_row(
            "malicious@dfs(naive)",
            naive.label,
            _loan_scenario(naive, "client_malicious", {"l": L1, "sink": SINK, "amount": 100}),
            expected_commit=False,
        )
    )
    return FlashLoanReport(rows=tuple(rows))
