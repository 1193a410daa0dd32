"""Contract-to-contract compilers between execution mechanisms.

Each transformer takes a contract written against one mechanism (or against
monitor hooks) and produces a contract with observably equal behaviour that
uses a different mechanism. They are wrappers over the step function, not
source rewrites: the wrapped step simulates the original's mechanism queries,
keeps any bookkeeping in extra storage fields, and projects back to the
original storage for differential comparison.

Where the original semantics settles money transfers when the pending
operation executes (not when it is emitted), the monitor and hookup
simulations evaluate their final checks against an adjusted balance
start + received - emitted, which equals the real balance once every pending
transfer has run.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

from .core import (
    Address,
    ContractDef,
    ContractError,
    Mechanism,
    Operation,
    ScenarioError,
    StepOk,
    StepResult,
    UNIT,
    VAmt,
    VBool,
    VInt,
    VRec,
    Value,
    as_amt,
    as_bool,
    as_int,
    as_rec,
)

FAIL_POLL = "__fail_poll"
USTORE_POLL = "__ustore_poll"
USTORE_CHECK = "__ustore_check"


class TransformRefused(ScenarioError):
    """The input contract is outside the transformer's domain."""


@dataclass(frozen=True)
class TransformedContract:
    wrapped: ContractDef
    extra_storage_schema: str
    project: Callable[[Value], Value]
    wrap_storage: Callable[..., Value]


class SimulatedView:
    """Pass-through view that overrides selected mechanism queries with
    simulated answers. Everything not overridden reaches the engine view, so
    a query against a genuinely disabled mechanism still faults."""

    def __init__(
        self,
        inner,
        first: Optional[Callable[[], bool]] = None,
        count: Optional[Callable[[], int]] = None,
        txmem_get: Optional[Callable[[], Value]] = None,
        txmem_set: Optional[Callable[[Value], None]] = None,
        set_fail: Optional[Callable[[bool], None]] = None,
    ):
        self._inner = inner
        self._first = first
        self._count = count
        self._txmem_get = txmem_get
        self._txmem_set = txmem_set
        self._set_fail = set_fail

    @property
    def first(self) -> bool:
        return self._first() if self._first is not None else self._inner.first

    @property
    def count(self) -> int:
        return self._count() if self._count is not None else self._inner.count

    @property
    def queue(self) -> bool:
        return self._inner.queue

    @property
    def txmem(self) -> Value:
        return self._txmem_get() if self._txmem_get is not None else self._inner.txmem

    def set_txmem(self, value: Value) -> None:
        if self._txmem_set is not None:
            self._txmem_set(value)
        else:
            self._inner.set_txmem(value)

    def set_fail(self, value: bool) -> None:
        if self._set_fail is not None:
            self._set_fail(bool(value))
        else:
            self._inner.set_fail(value)

    def note_reading(self, name: str, value: Value) -> None:
        self._inner.note_reading(name, value)

    @property
    def self_addr(self) -> Address:
        return self._inner.self_addr

    @property
    def balance(self) -> int:
        return self._inner.balance

    @property
    def storage(self) -> Value:
        return self._inner.storage

    @property
    def tx_money(self) -> int:
        return self._inner.tx_money

    @property
    def block_level(self) -> int:
        return self._inner.block_level

    @property
    def timestamp(self) -> int:
        return self._inner.timestamp


def _require_uses(c: ContractDef, allowed: frozenset[Mechanism], name: str) -> None:
    extra = c.mechanism_uses - allowed
    if extra:
        raise TransformRefused(
            f"{name} needs a contract using only {sorted(m.value for m in allowed)}, "
            f"got extra {sorted(m.value for m in extra)}"
        )


def _self_call(addr: Address, method: str) -> Operation:
    return Operation(dest=addr, src="", method=method, recurring=True)


def _stamp(emitted: tuple[Operation, ...], addr: Address) -> tuple[Operation, ...]:
    return tuple(replace(e, src=addr) for e in emitted)


def _project_field(key: str) -> Callable[[Value], Value]:
    def project(storage: Value) -> Value:
        return as_rec(storage).get(key)  # type: ignore[return-value]

    return project


# ---------------------------------------------------------------------------
# Equivalence cycle: first / count / txmem / bstore


def sim_count_via_first(c: ContractDef) -> TransformedContract:
    """Serve count queries from a storage counter reset whenever first is
    true: 1 on the first call of a transaction, previous+1 afterwards."""
    _require_uses(c, frozenset({Mechanism.COUNT}), "sim_count_via_first")

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        n = 1 if view.first else as_int(s.get("sim_count")) + 1

        def count_query() -> int:
            view.note_reading("count", VInt(n))
            return n

        res = c.step(
            SimulatedView(view, count=count_query), method, param, money, s.get("base"), balance
        )
        if not isinstance(res, StepOk):
            return res
        return StepOk(
            VRec({"base": res.new_storage, "sim_count": VInt(n)}), res.emitted
        )

    wrapped = replace(
        c, step=step, mechanism_uses=frozenset({Mechanism.FIRST})
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="sim_count: running per-transaction invocation counter",
        project=_project_field("base"),
        wrap_storage=lambda s, ms=UNIT: VRec({"base": s, "sim_count": VInt(0)}),
    )


def sim_first_via_count(c: ContractDef) -> TransformedContract:
    """Serve first queries as `count == 1` (count includes the running call)."""
    _require_uses(c, frozenset({Mechanism.FIRST}), "sim_first_via_count")

    def step(view, method, param, money, storage, balance) -> StepResult:
        def first_query() -> bool:
            value = view.count == 1
            view.note_reading("first", VBool(value))
            return value

        return c.step(SimulatedView(view, first=first_query), method, param, money, storage, balance)

    wrapped = replace(c, step=step, mechanism_uses=frozenset({Mechanism.COUNT}))
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="",
        project=lambda s: s,
        wrap_storage=lambda s, ms=UNIT: s,
    )


def sim_first_via_txmem(c: ContractDef) -> TransformedContract:
    """A volatile flag starts true and is lowered at the end of every method,
    so it reads true exactly on the first interaction of a transaction."""
    _require_uses(c, frozenset({Mechanism.FIRST}), "sim_first_via_txmem")

    def step(view, method, param, money, storage, balance) -> StepResult:
        def first_query() -> bool:
            value = as_bool(view.txmem)
            view.note_reading("first", VBool(value))
            return value

        res = c.step(SimulatedView(view, first=first_query), method, param, money, storage, balance)
        if isinstance(res, StepOk):
            view.set_txmem(VBool(False))
        return res

    wrapped = replace(
        c,
        step=step,
        txmem_init=lambda storage: VBool(True),
        mechanism_uses=frozenset({Mechanism.TXMEM}),
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="volatile bool: true until the first method ends",
        project=lambda s: s,
        wrap_storage=lambda s, ms=UNIT: s,
    )


def sim_txmem_via_first(c: ContractDef) -> TransformedContract:
    """Keep a copy of the volatile segment in storage, rebuilt from the
    original initializer whenever first is true."""
    _require_uses(c, frozenset({Mechanism.TXMEM}), "sim_txmem_via_first")
    if c.txmem_init is None:
        raise TransformRefused("sim_txmem_via_first needs a txmem initializer")

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        base = s.get("base")
        seg = c.txmem_init(base) if view.first else s.get("sim_txmem")
        buf = [seg]

        def txmem_get() -> Value:
            view.note_reading("txmem_in", buf[0])
            return buf[0]

        res = c.step(
            SimulatedView(view, txmem_get=txmem_get, txmem_set=lambda v: buf.__setitem__(0, v)),
            method, param, money, base, balance,
        )
        if not isinstance(res, StepOk):
            return res
        return StepOk(VRec({"base": res.new_storage, "sim_txmem": buf[0]}), res.emitted)

    wrapped = replace(
        c, step=step, txmem_init=None, mechanism_uses=frozenset({Mechanism.FIRST})
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="sim_txmem: persisted copy of the volatile segment",
        project=_project_field("base"),
        wrap_storage=lambda s, ms=UNIT: VRec({"base": s, "sim_txmem": UNIT}),
    )


def sim_bstore_via_first(c: ContractDef) -> TransformedContract:
    """Apply the bounded hookup eagerly after every method, parking the result
    in a side field; the live storage adopts it at the start of the next
    transaction. The side field is the storage an outside comparison reads."""
    _require_uses(c, frozenset({Mechanism.BSTORE}), "sim_bstore_via_first")
    if c.bstore_hook is None:
        raise TransformRefused("sim_bstore_via_first needs a bounded hookup")
    hook = c.bstore_hook

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        base = s.get("s_hookup") if view.first else s.get("base")
        res = c.step(view, method, param, money, base, balance)
        if not isinstance(res, StepOk):
            return res
        parked = hook(res.new_storage, balance)
        return StepOk(
            VRec({"base": res.new_storage, "s_hookup": parked}), res.emitted
        )

    wrapped = replace(
        c, step=step, bstore_hook=None, mechanism_uses=frozenset({Mechanism.FIRST})
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="s_hookup: hookup result pending adoption",
        project=_project_field("s_hookup"),
        wrap_storage=lambda s, ms=UNIT: VRec({"base": s, "s_hookup": s}),
    )


def sim_first_via_bstore(c: ContractDef) -> TransformedContract:
    """A storage flag lowered by every invocation and raised again by the
    bounded hookup reads true exactly on the first call of a transaction."""
    _require_uses(c, frozenset({Mechanism.FIRST}), "sim_first_via_bstore")

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        flag = as_bool(s.get("b_fst"))

        def first_query() -> bool:
            view.note_reading("first", VBool(flag))
            return flag

        res = c.step(
            SimulatedView(view, first=first_query), method, param, money, s.get("base"), balance
        )
        if not isinstance(res, StepOk):
            return res
        return StepOk(VRec({"base": res.new_storage, "b_fst": VBool(False)}), res.emitted)

    def raise_flag(storage: Value, balance: int) -> Value:
        return as_rec(storage).set("b_fst", VBool(True))

    wrapped = replace(
        c, step=step, bstore_hook=raise_flag, mechanism_uses=frozenset({Mechanism.BSTORE})
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="b_fst: true only until the first call of a transaction",
        project=_project_field("base"),
        wrap_storage=lambda s, ms=UNIT: VRec({"base": s, "b_fst": VBool(True)}),
    )


# ---------------------------------------------------------------------------
# Fail bits via unbounded hookup


def sim_fail_via_ustore(c: ContractDef) -> TransformedContract:
    """Mirror the fail bit in a storage field; the unbounded hookup fails the
    transaction when the mirrored bit is still raised at the end."""
    _require_uses(c, frozenset({Mechanism.FAIL}), "sim_fail_via_ustore")

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        bit = [as_bool(s.get("fl"))]
        res = c.step(
            SimulatedView(view, set_fail=lambda v: bit.__setitem__(0, bool(v))),
            method, param, money, s.get("base"), balance,
        )
        if not isinstance(res, StepOk):
            return res
        return StepOk(VRec({"base": res.new_storage, "fl": VBool(bit[0])}), res.emitted)

    def hookup(storage: Value, balance: int) -> Value:
        if as_bool(as_rec(storage).get("fl")):
            raise ContractError("mirrored fail bit raised")
        return storage

    wrapped = replace(
        c, step=step, ustore_hook=hookup, mechanism_uses=frozenset({Mechanism.USTORE})
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="fl: mirrored fail bit, false whenever committed",
        project=_project_field("base"),
        wrap_storage=lambda s, ms=UNIT: VRec({"base": s, "fl": VBool(False)}),
    )


# ---------------------------------------------------------------------------
# Transaction monitors from first + fail


def monitor_via_first_fail(c: ContractDef) -> TransformedContract:
    """Inline a monitored contract's hooks into its methods on a first+fail
    engine: run init when first is true, begin/end around the body, and after
    every method evaluate term against the balance adjusted for emitted but
    not yet executed transfers, recording the verdict in the fail bit. The
    last evaluation in the transaction is the one that counts.
    """
    if not any(h is not None for h in (c.init, c.begin, c.end, c.term)):
        raise TransformRefused("monitor_via_first_fail needs a monitored contract")
    if Mechanism.FAIL in c.mechanism_uses:
        raise TransformRefused("contract already owns its fail bit")

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        if view.first:
            bal0 = balance - money
            recv = 0
            sent = 0
            mon = s.get("mon")
            if c.init is not None:
                mon = c.init(s.get("base"), bal0, mon)
        else:
            bal0 = as_amt(s.get("bal0"))
            recv = as_amt(s.get("recv"))
            sent = as_amt(s.get("sent"))
            mon = s.get("mon")
        recv += money
        if c.begin is not None:
            mon = c.begin(method, param, money, mon)
        res = c.step(view, method, param, money, s.get("base"), balance)
        if not isinstance(res, StepOk):
            return res
        emitted = _stamp(res.emitted, view.self_addr)
        sent += sum(e.money for e in emitted)
        if c.end is not None:
            mon = c.end(emitted, res.new_storage, mon)
        rejected = False
        if c.term is not None:
            try:
                c.term(res.new_storage, bal0 + recv - sent, mon)
            except ContractError:
                rejected = True
        view.set_fail(rejected)
        new_s = VRec(
            {
                "base": res.new_storage,
                "mon": mon,
                "bal0": VAmt(bal0),
                "recv": VAmt(recv),
                "sent": VAmt(sent),
            }
        )
        return StepOk(new_s, emitted)

    wrapped = replace(
        c,
        step=step,
        init=None,
        begin=None,
        end=None,
        term=None,
        mechanism_uses=(c.mechanism_uses | {Mechanism.FIRST, Mechanism.FAIL}),
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema=(
            "mon: inlined monitor storage; bal0/recv/sent: pending-transfer "
            "balance adjustment"
        ),
        project=_project_field("base"),
        wrap_storage=lambda s, ms=UNIT: VRec(
            {"base": s, "mon": ms, "bal0": VAmt(0), "recv": VAmt(0), "sent": VAmt(0)}
        ),
    )


def monitor_storage_of(transformed_storage: Value) -> Value:
    """The inlined monitor storage of a monitor_via_first_fail contract."""
    return as_rec(transformed_storage).get("mon")  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# BFS constructions: recurring operations


def sim_fail_via_recurring_bfs(c: ContractDef) -> TransformedContract:
    """Fail bits on a bare BFS engine: mirror the bit in storage and keep one
    recurring poll alive while it is raised. A bit still raised when everything
    else has drained leaves the poll re-injecting itself until gas runs out."""
    _require_uses(c, frozenset({Mechanism.FAIL}), "sim_fail_via_recurring_bfs")

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        if method == FAIL_POLL:
            if as_bool(s.get("fl")):
                return StepOk(s, (_self_call(view.self_addr, FAIL_POLL),))
            return StepOk(s.set("poll", VBool(False)))
        bit = [as_bool(s.get("fl"))]
        res = c.step(
            SimulatedView(view, set_fail=lambda v: bit.__setitem__(0, bool(v))),
            method, param, money, s.get("base"), balance,
        )
        if not isinstance(res, StepOk):
            return res
        emitted = _stamp(res.emitted, view.self_addr)
        poll = as_bool(s.get("poll"))
        if bit[0] and not poll:
            emitted = emitted + (_self_call(view.self_addr, FAIL_POLL),)
            poll = True
        return StepOk(
            VRec({"base": res.new_storage, "fl": VBool(bit[0]), "poll": VBool(poll)}),
            emitted,
        )

    wrapped = replace(
        c,
        step=step,
        recurring_methods=c.recurring_methods | {FAIL_POLL},
        mechanism_uses=frozenset(),
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="fl: mirrored fail bit; poll: a recurring poll is queued",
        project=_project_field("base"),
        wrap_storage=lambda s, ms=UNIT: VRec(
            {"base": s, "fl": VBool(False), "poll": VBool(False)}
        ),
    )


def sim_ustore_via_first_bfs(c: ContractDef) -> TransformedContract:
    """Unbounded hookup on BFS + first: evaluate the hookup preventively after
    every method against a shadow copy of the storage, flushing the shadow into
    the live storage at the start of the next transaction. A failing hookup is
    simulated by a recurring poll that exhausts gas unless a later method makes
    the hookup pass. The hookup sees the pending-transfer-adjusted balance,
    which is the balance it would see at the real end of the transaction."""
    _require_uses(c, frozenset({Mechanism.USTORE}), "sim_ustore_via_first_bfs")
    if c.ustore_hook is None:
        raise TransformRefused("sim_ustore_via_first_bfs needs an unbounded hookup")
    hook = c.ustore_hook

    def evaluate(live: Value, adjusted: int):
        try:
            return hook(live, adjusted), True
        except ContractError:
            return None, False

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        if method == USTORE_POLL:
            adjusted = as_amt(s.get("bal0")) + as_amt(s.get("recv")) - as_amt(s.get("sent"))
            parked, ok = evaluate(s.get("live"), adjusted)
            if ok:
                return StepOk(s.set("shadow", parked).set("poll", VBool(False)))
            return StepOk(s, (_self_call(view.self_addr, USTORE_POLL),))
        if view.first:
            live = s.get("shadow")
            bal0 = balance - money
            recv = 0
            sent = 0
            poll = False
        else:
            live = s.get("live")
            bal0 = as_amt(s.get("bal0"))
            recv = as_amt(s.get("recv"))
            sent = as_amt(s.get("sent"))
            poll = as_bool(s.get("poll"))
        recv += money
        res = c.step(view, method, param, money, live, balance)
        if not isinstance(res, StepOk):
            return res
        emitted = _stamp(res.emitted, view.self_addr)
        sent += sum(e.money for e in emitted)
        parked, ok = evaluate(res.new_storage, bal0 + recv - sent)
        shadow = s.get("shadow")
        if ok:
            shadow = parked
        elif not poll:
            emitted = emitted + (_self_call(view.self_addr, USTORE_POLL),)
            poll = True
        return StepOk(
            VRec(
                {
                    "live": res.new_storage,
                    "shadow": shadow,
                    "bal0": VAmt(bal0),
                    "recv": VAmt(recv),
                    "sent": VAmt(sent),
                    "poll": VBool(poll),
                }
            ),
            emitted,
        )

    wrapped = replace(
        c,
        step=step,
        ustore_hook=None,
        recurring_methods=c.recurring_methods | {USTORE_POLL},
        mechanism_uses=frozenset({Mechanism.FIRST}),
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema=(
            "shadow: preventively hooked storage flushed on the next first; "
            "bal0/recv/sent: balance adjustment; poll: failing-hookup poll queued"
        ),
        project=_project_field("shadow"),
        wrap_storage=lambda s, ms=UNIT: VRec(
            {
                "live": s,
                "shadow": s,
                "bal0": VAmt(0),
                "recv": VAmt(0),
                "sent": VAmt(0),
                "poll": VBool(False),
            }
        ),
    )


def sim_ustore_via_queue_bfs(c: ContractDef) -> TransformedContract:
    """Unbounded hookup on BFS + queue info: one recurring self-check polls
    the pending queue and, once only recurring operations remain, runs the
    hookup against the live storage and real balance — failing explicitly
    instead of burning gas."""
    _require_uses(c, frozenset({Mechanism.USTORE}), "sim_ustore_via_queue_bfs")
    if c.ustore_hook is None:
        raise TransformRefused("sim_ustore_via_queue_bfs needs an unbounded hookup")
    hook = c.ustore_hook

    def step(view, method, param, money, storage, balance) -> StepResult:
        s = as_rec(storage)
        if method == USTORE_CHECK:
            if not view.queue:
                return StepOk(s, (_self_call(view.self_addr, USTORE_CHECK),))
            new_base = hook(s.get("base"), balance)
            return StepOk(s.set("base", new_base).set("check", VBool(False)))
        res = c.step(view, method, param, money, s.get("base"), balance)
        if not isinstance(res, StepOk):
            return res
        emitted = _stamp(res.emitted, view.self_addr)
        check = as_bool(s.get("check"))
        if not check:
            emitted = emitted + (_self_call(view.self_addr, USTORE_CHECK),)
            check = True
        return StepOk(VRec({"base": res.new_storage, "check": VBool(check)}), emitted)

    wrapped = replace(
        c,
        step=step,
        ustore_hook=None,
        recurring_methods=c.recurring_methods | {USTORE_CHECK},
        mechanism_uses=frozenset({Mechanism.QUEUE}),
    )
    return TransformedContract(
        wrapped=wrapped,
        extra_storage_schema="check: the recurring end-of-queue check is pending",
        project=_project_field("base"),
        wrap_storage=lambda s, ms=UNIT: VRec({"base": s, "check": VBool(False)}),
    )
