"""Small-step transaction execution.

One transaction = one external operation driven to queue drain (commit) or to
the first failure (abort, pre-state preserved). Emitted operations go to the
front of the pending queue under DFS and to the back under BFS; those two
queue laws are the only difference between the schedulers.

Gas model: one unit per executed operation plus one unit per emitted
operation. Monitor hooks and storage hookups are free; the meter exists so
that recurring self-injection reliably exhausts it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from .core import (
    AbortReason,
    Aborted,
    Address,
    ChainState,
    Committed,
    ContractDef,
    ContractError,
    ContractFail,
    Context,
    FailBitSet,
    GasExhausted,
    InsufficientBalance,
    Mechanism,
    MonitorBeginFail,
    MonitorEndFail,
    MonitorInitFail,
    MonitorMode,
    MonitorTermFail,
    HookupFail,
    Operation,
    Outcome,
    RecordKind,
    RecurringEscape,
    Registry,
    ScenarioError,
    SchedulerKind,
    StepFail,
    StepOk,
    StepRecord,
    Trace,
    TraceMeta,
    Value,
    digest,
    storage_digest,
)
from .mechanisms import ContextView, end_of_tx_fail_check, fold_effects, run_hookups

OP_COST = 1
EMIT_COST = 1


@dataclass(frozen=True)
class EngineConfig:
    scheduler: SchedulerKind = SchedulerKind.DFS
    gas_limit: int = 1_000
    mechanisms: frozenset[Mechanism] = frozenset()
    monitor_mode: MonitorMode = MonitorMode.NONE

    def __post_init__(self) -> None:
        if self.gas_limit < 1:
            raise ScenarioError("gas limit must be at least 1")
        object.__setattr__(self, "mechanisms", frozenset(self.mechanisms))


@dataclass(frozen=True)
class RunningTx:
    """The live configuration a transaction steps through: chain state,
    transaction context, and the pending operation queue."""

    state: ChainState
    ctx: Context
    queue: tuple[Operation, ...]


@dataclass(frozen=True)
class TxResult:
    outcome: Outcome
    trace: Trace

    @property
    def committed(self) -> bool:
        return self.outcome.committed


def charge_gas(ctx: Context, cost: int) -> Optional[Context]:
    """Pay `cost` from the meter; None when the charge is unaffordable."""
    if cost > ctx.gas_remaining:
        return None
    return ctx.with_gas(ctx.gas_remaining - cost)


def _is_monitored(contract: ContractDef) -> bool:
    return any(
        h is not None for h in (contract.init, contract.begin, contract.end, contract.term)
    )


class Engine:
    """Runs transactions against a fixed contract registry and configuration.

    Instances own all mutable state of a run; separate instances are
    independent and may run on separate threads.
    """

    def __init__(self, registry: Registry, config: EngineConfig, debug: bool = False):
        self.registry = dict(registry)
        self.config = config
        self.debug = debug

    # -- public API ---------------------------------------------------------

    def run_transaction(
        self,
        state: ChainState,
        external: Operation,
        gas_limit: Optional[int] = None,
        block_level: int = 0,
        timestamp: int = 0,
    ) -> TxResult:
        cfg = self.config
        gas = cfg.gas_limit if gas_limit is None else gas_limit
        if gas < 1:
            raise ScenarioError("gas limit must be at least 1")
        self._validate_external(state, external)

        pre = state
        ctx = Context(
            block_level=block_level,
            timestamp=timestamp,
            gas_remaining=gas,
            tx_money=external.money,
        )
        meta = TraceMeta(
            scheduler=cfg.scheduler,
            monitor_mode=cfg.monitor_mode,
            mechanisms=cfg.mechanisms,
            gas_limit=gas,
            external=external,
            block_level=block_level,
            timestamp=timestamp,
        )
        records: list[StepRecord] = []
        tx = RunningTx(state=state, ctx=ctx, queue=(external,))
        abort: Optional[AbortReason] = None

        while tx.queue:
            stepped = self._step_op(tx, records)
            if isinstance(stepped, AbortReason):
                abort = stepped
                break
            tx = stepped

        state = tx.state
        if abort is None:
            state, abort = self._end_phases(tx.state, tx.ctx, records)

        trace = Trace(meta=meta, records=tuple(records))
        if abort is not None:
            return TxResult(Aborted(abort), trace)
        return TxResult(Committed(state), trace)

    # -- single operation ------------------------------------------------------

    def _step_op(
        self, tx: RunningTx, records: list[StepRecord]
    ) -> Union[AbortReason, RunningTx]:
        cfg = self.config
        state, ctx = tx.state, tx.ctx
        op, rest = tx.queue[0], tx.queue[1:]
        contract = self.registry.get(op.dest)
        if contract is None:
            return ContractFail(op.dest, "no contract installed at destination")
        full_queue = (op,) + rest

        if (
            cfg.monitor_mode is MonitorMode.TRANSACTION
            and op.dest not in ctx.visited
            and _is_monitored(contract)
        ):
            acct = state.get(op.dest)
            if contract.init is not None:
                try:
                    new_ms = contract.init(acct.storage, acct.balance, acct.monitor_storage)
                except ContractError:
                    return MonitorInitFail(op.dest)
                state = state.with_monitor_storage(op.dest, new_ms)
            self._record(
                records,
                RecordKind.INIT,
                op.dest,
                state,
                ctx.gas_remaining,
                ctx.gas_remaining,
                full_queue,
                full_queue,
                storage_before=acct.storage,
                storage_after=acct.storage,
                balance_seen=acct.balance,
            )

        if cfg.monitor_mode is not MonitorMode.NONE and contract.begin is not None:
            acct = state.get(op.dest)
            try:
                new_ms = contract.begin(op.method, op.param, op.money, acct.monitor_storage)
            except ContractError:
                return MonitorBeginFail(op.dest)
            state = state.with_monitor_storage(op.dest, new_ms)
            self._record(
                records,
                RecordKind.BEGIN,
                op.dest,
                state,
                ctx.gas_remaining,
                ctx.gas_remaining,
                full_queue,
                full_queue,
                executed=op,
                storage_before=acct.storage,
                storage_after=acct.storage,
                balance_seen=acct.balance,
            )

        gas_before = ctx.gas_remaining
        charged = charge_gas(ctx, OP_COST)
        if charged is None:
            return GasExhausted()
        ctx = charged.visit(op.dest)

        if state.balance(op.src) < op.money:
            return InsufficientBalance(op)
        try:
            state = state.move(op.src, op.dest, op.money)
        except ContractError as exc:
            return ContractFail(op.dest, str(exc))
        acct = state.get(op.dest)

        view = self._make_view(ctx, op, contract, rest, acct.balance, acct.storage)
        try:
            result = contract.step(view, op.method, op.param, op.money, acct.storage, acct.balance)
            if self.debug:
                self._audit_purity(ctx, op, contract, rest, acct.balance, acct.storage, view, result)
        except ContractError as exc:
            return ContractFail(op.dest, str(exc))
        if isinstance(result, StepFail):
            return ContractFail(op.dest, result.reason)
        if not isinstance(result, StepOk):
            raise ScenarioError(f"step at {op.dest} returned {result!r}")

        emitted: list[Operation] = []
        for raw in result.emitted:
            e = replace(raw, src=op.dest)
            if e.recurring and (
                e.dest != op.dest
                or e.money != 0
                or e.method not in contract.recurring_methods
            ):
                return RecurringEscape(e)
            emitted.append(e)

        charged = charge_gas(ctx, EMIT_COST * len(emitted))
        if charged is None:
            return GasExhausted()
        ctx = fold_effects(charged, view)

        state = state.with_storage(op.dest, result.new_storage)
        if cfg.scheduler is SchedulerKind.DFS:
            new_queue = tuple(emitted) + rest
        else:
            new_queue = rest + tuple(emitted)

        self._record(
            records,
            RecordKind.OP,
            op.dest,
            state,
            gas_before,
            ctx.gas_remaining,
            full_queue,
            new_queue,
            executed=op,
            emitted=tuple(emitted),
            storage_before=acct.storage,
            storage_after=result.new_storage,
            balance_seen=acct.balance,
            readings=dict(view.readings),
        )

        if cfg.monitor_mode is not MonitorMode.NONE and contract.end is not None:
            ms = state.monitor_storage(op.dest)
            try:
                new_ms = contract.end(tuple(emitted), result.new_storage, ms)
            except ContractError:
                return MonitorEndFail(op.dest)
            state = state.with_monitor_storage(op.dest, new_ms)
            self._record(
                records,
                RecordKind.END,
                op.dest,
                state,
                ctx.gas_remaining,
                ctx.gas_remaining,
                new_queue,
                new_queue,
                executed=op,
                storage_before=result.new_storage,
                storage_after=result.new_storage,
                balance_seen=state.balance(op.dest),
            )

        if self.debug:
            for a, n in ctx.counts.items():
                assert (n >= 1) == (a in ctx.visited), "visited/count drift"

        return RunningTx(state=state, ctx=ctx, queue=new_queue)

    # -- end-of-transaction phases ----------------------------------------------

    def _end_phases(
        self, state: ChainState, ctx: Context, records: list[StepRecord]
    ) -> tuple[ChainState, Optional[AbortReason]]:
        cfg = self.config
        gas = ctx.gas_remaining

        for kind in (Mechanism.BSTORE, Mechanism.USTORE):
            if kind not in cfg.mechanisms:
                continue
            state, applied, failed = run_hookups(self.registry, state, ctx.visited, kind)
            for addr, before, after, balance, snapshot in applied:
                self._record(
                    records, RecordKind.HOOKUP, addr, snapshot, gas, gas, (), (),
                    storage_before=before, storage_after=after, balance_seen=balance,
                )
            if failed is not None:
                return state, HookupFail(failed)

        if Mechanism.FAIL in cfg.mechanisms:
            bad = end_of_tx_fail_check(ctx)
            if bad:
                for addr in ctx.visited:
                    if addr in bad:
                        acct = state.get(addr)
                        self._record(
                            records, RecordKind.FAIL_BIT_CHECK, addr, state, gas, gas,
                            (), (), storage_before=acct.storage,
                            storage_after=acct.storage, balance_seen=acct.balance,
                        )
                return state, FailBitSet(bad)

        if cfg.monitor_mode is MonitorMode.TRANSACTION:
            for addr in ctx.visited:
                contract = self.registry.get(addr)
                if contract is None or not _is_monitored(contract):
                    continue
                acct = state.get(addr)
                if contract.term is not None:
                    try:
                        contract.term(acct.storage, acct.balance, acct.monitor_storage)
                    except ContractError:
                        return state, MonitorTermFail(addr)
                self._record(
                    records, RecordKind.TERM, addr, state, gas, gas, (), (),
                    storage_before=acct.storage, storage_after=acct.storage,
                    balance_seen=acct.balance,
                )

        return state, None

    # -- helpers ---------------------------------------------------------------

    def _make_view(
        self,
        ctx: Context,
        op: Operation,
        contract: ContractDef,
        pending: tuple[Operation, ...],
        balance: int,
        storage: Value,
    ) -> ContextView:
        return ContextView(
            ctx=ctx,
            self_addr=op.dest,
            contract=contract,
            enabled=self.config.mechanisms,
            pending=pending,
            balance=balance,
            storage=storage,
        )

    def _audit_purity(self, ctx, op, contract, pending, balance, storage, view, result):
        """Evaluate the step a second time and demand identical behaviour."""
        view2 = self._make_view(ctx, op, contract, pending, balance, storage)
        result2 = contract.step(view2, op.method, op.param, op.money, storage, balance)
        same = (
            result == result2
            and view.readings == view2.readings
            and view.fail_write == view2.fail_write
            and view.txmem_value == view2.txmem_value
        )
        if not same:
            raise ScenarioError(f"non-deterministic step function at {op.dest}")

    def _validate_external(self, state: ChainState, external: Operation) -> None:
        if not state.has(external.src):
            raise ScenarioError(f"external source {external.src!r} has no account")
        if external.src in self.registry:
            raise ScenarioError("external source must not be a registered contract")
        if external.dest not in self.registry:
            raise ScenarioError(
                f"external destination {external.dest!r} is not a registered contract"
            )
        if external.recurring:
            raise ScenarioError("external operations cannot be recurring")

    def _record(
        self,
        records: list[StepRecord],
        kind: RecordKind,
        subject: Address,
        state: ChainState,
        gas_before: int,
        gas_after: int,
        queue_before: tuple[Operation, ...],
        queue_after: tuple[Operation, ...],
        executed: Optional[Operation] = None,
        emitted: tuple[Operation, ...] = (),
        storage_before: Optional[Value] = None,
        storage_after: Optional[Value] = None,
        balance_seen: Optional[int] = None,
        readings: Optional[dict] = None,
    ) -> None:
        records.append(
            StepRecord(
                index=len(records),
                kind=kind,
                subject=subject,
                executed=executed,
                queue_before=queue_before,
                queue_after=queue_after,
                emitted=emitted,
                gas_before=gas_before,
                gas_after=gas_after,
                state_digest=digest(state),
                storage_digest=storage_digest(state),
                storage_before=storage_before,
                storage_after=storage_after,
                balance_seen=balance_seen,
                readings=readings or {},
            )
        )


def run_transaction(
    registry: Registry,
    state: ChainState,
    config: EngineConfig,
    external: Operation,
    **kwargs,
) -> TxResult:
    return Engine(registry, config).run_transaction(state, external, **kwargs)


class ReplayView:
    """Serves one recorded operation's mechanism readings back to its step
    function so the step can be re-evaluated from the trace alone."""

    def __init__(self, record: StepRecord, meta: TraceMeta):
        self._r = record
        self._meta = meta
        self.self_addr = record.subject
        self.balance = record.balance_seen
        self.storage = record.storage_before
        self._txmem = record.readings.get("txmem_in")

    def _served(self, name: str):
        if name not in self._r.readings:
            raise ScenarioError(f"replay asked for unrecorded reading {name!r}")
        return self._r.readings[name]

    @property
    def block_level(self) -> int:
        return self._meta.block_level

    @property
    def timestamp(self) -> int:
        return self._meta.timestamp

    @property
    def tx_money(self) -> int:
        return self._meta.external.money

    @property
    def first(self) -> bool:
        from .core import as_bool

        return as_bool(self._served("first"))

    @property
    def count(self) -> int:
        from .core import as_int

        return as_int(self._served("count"))

    @property
    def queue(self) -> bool:
        from .core import as_bool

        return as_bool(self._served("queue"))

    @property
    def txmem(self):
        if self._txmem is None:
            raise ScenarioError("replay asked for unrecorded txmem")
        return self._txmem

    def set_txmem(self, value) -> None:
        self._txmem = value

    def set_fail(self, value: bool) -> None:
        pass

    def note_reading(self, name: str, value) -> None:
        pass


def replay_step(
    registry: Registry, meta: TraceMeta, record: StepRecord
) -> tuple[Value, tuple[Operation, ...]]:
    """Re-run an Op record's step function from its recorded inputs; returns
    the storage and (src-stamped) emissions the step produces on replay."""
    if record.kind is not RecordKind.OP or record.executed is None:
        raise ScenarioError("only operation records can be replayed")
    contract = registry[record.subject]
    view = ReplayView(record, meta)
    op = record.executed
    result = contract.step(view, op.method, op.param, op.money, record.storage_before, record.balance_seen)
    if not isinstance(result, StepOk):
        raise ScenarioError(f"replay of {record.index} failed: {result!r}")
    emitted = tuple(replace(e, src=record.subject) for e in result.emitted)
    return result.new_storage, emitted
