"""Shared domain types: values, operations, accounts, chain state, transaction
context, contract definitions, outcomes, and trace records.

Every type here is immutable after construction. The execution engine threads
fresh snapshots through a transaction instead of mutating in place, which is
what makes abort-time rollback and trace digests trivial to get right.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Callable, Iterable, Mapping, Optional

Address = str

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1
U64_MAX = 2**64 - 1


class ContractError(Exception):
    """Failure signalled by contract code or a hook; aborts the transaction."""


class ScenarioError(Exception):
    """Authoring or harness misuse; never a transaction outcome."""


# ---------------------------------------------------------------------------
# Values


class Value:
    """Base class of the tagged storage/parameter variants."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class VUnit(Value):
    pass


@dataclass(frozen=True, slots=True)
class VBool(Value):
    b: bool


@dataclass(frozen=True, slots=True)
class VInt(Value):
    n: int

    def __post_init__(self) -> None:
        if not (I64_MIN <= self.n <= I64_MAX):
            raise ValueError(f"signed value out of 64-bit range: {self.n}")


@dataclass(frozen=True, slots=True)
class VAmt(Value):
    """Non-negative token amount (unsigned 64-bit)."""

    n: int

    def __post_init__(self) -> None:
        if not (0 <= self.n <= U64_MAX):
            raise ValueError(f"amount out of unsigned 64-bit range: {self.n}")


@dataclass(frozen=True, slots=True)
class VAddr(Value):
    addr: Address


@dataclass(frozen=True, slots=True)
class VText(Value):
    s: str


@dataclass(frozen=True, slots=True)
class VSeq(Value):
    items: tuple[Value, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True, slots=True)
class VRec(Value):
    """Finite text->value mapping, stored key-sorted so equality is structural."""

    entries: tuple[tuple[str, Value], ...] = ()

    def __post_init__(self) -> None:
        if isinstance(self.entries, Mapping):
            pairs = list(self.entries.items())
        else:
            pairs = list(self.entries)
        items = tuple(sorted(pairs, key=lambda kv: kv[0]))
        keys = [k for k, _ in items]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate record keys: {keys}")
        object.__setattr__(self, "entries", items)

    def get(self, key: str, default: Optional[Value] = None) -> Optional[Value]:
        for k, v in self.entries:
            if k == key:
                return v
        return default

    def __contains__(self, key: str) -> bool:
        return any(k == key for k, _ in self.entries)

    def set(self, key: str, value: Value) -> "VRec":
        out = dict(self.entries)
        out[key] = value
        return VRec(out)

    def as_dict(self) -> dict[str, Value]:
        return dict(self.entries)


UNIT = VUnit()


def vrec(**fields: Value) -> VRec:
    return VRec(fields)


def vseq(*items: Value) -> VSeq:
    return VSeq(tuple(items))


def checked_int(n: int) -> VInt:
    """Range-checked construction for contract arithmetic; overflow fails the
    contract rather than wrapping or crashing the harness."""
    if not (I64_MIN <= n <= I64_MAX):
        raise ContractError(f"integer overflow: {n}")
    return VInt(n)


def checked_amt(n: int) -> VAmt:
    if not (0 <= n <= U64_MAX):
        raise ContractError(f"amount out of range: {n}")
    return VAmt(n)


def as_bool(v: Value) -> bool:
    if not isinstance(v, VBool):
        raise ContractError(f"expected bool value, got {v!r}")
    return v.b


def as_int(v: Value) -> int:
    if not isinstance(v, VInt):
        raise ContractError(f"expected int value, got {v!r}")
    return v.n


def as_amt(v: Value) -> int:
    if not isinstance(v, VAmt):
        raise ContractError(f"expected amount value, got {v!r}")
    return v.n


def as_addr(v: Value) -> Address:
    if not isinstance(v, VAddr):
        raise ContractError(f"expected address value, got {v!r}")
    return v.addr


def as_text(v: Value) -> str:
    if not isinstance(v, VText):
        raise ContractError(f"expected text value, got {v!r}")
    return v.s


def as_seq(v: Value) -> tuple[Value, ...]:
    if not isinstance(v, VSeq):
        raise ContractError(f"expected sequence value, got {v!r}")
    return v.items


def as_rec(v: Value) -> VRec:
    if not isinstance(v, VRec):
        raise ContractError(f"expected record value, got {v!r}")
    return v


def canon(v: Value) -> Any:
    """Canonical JSON-able form; tags keep distinct variants distinct."""
    if isinstance(v, VUnit):
        return ["u"]
    if isinstance(v, VBool):
        return ["b", v.b]
    if isinstance(v, VInt):
        return ["i", v.n]
    if isinstance(v, VAmt):
        return ["m", v.n]
    if isinstance(v, VAddr):
        return ["a", v.addr]
    if isinstance(v, VText):
        return ["t", v.s]
    if isinstance(v, VSeq):
        return ["q", [canon(x) for x in v.items]]
    if isinstance(v, VRec):
        return ["r", [[k, canon(x)] for k, x in v.entries]]
    raise TypeError(f"not a value: {v!r}")


# ---------------------------------------------------------------------------
# Mechanisms, schedulers, monitor modes


class Mechanism(str, Enum):
    FIRST = "first"
    COUNT = "count"
    FAIL = "fail"
    QUEUE = "queue"
    TXMEM = "txmem"
    BSTORE = "bstore"
    USTORE = "ustore"


class SchedulerKind(str, Enum):
    DFS = "dfs"
    BFS = "bfs"


class MonitorMode(str, Enum):
    NONE = "none"
    OPERATION = "operation"
    TRANSACTION = "transaction"


# ---------------------------------------------------------------------------
# Operations and accounts


@dataclass(frozen=True, slots=True)
class Operation:
    """One pending invocation; the unit the schedulers reorder."""

    dest: Address
    src: Address
    method: str
    param: Value = UNIT
    money: int = 0
    recurring: bool = False

    def __post_init__(self) -> None:
        if self.money < 0:
            raise ValueError("operation money must be non-negative")


@dataclass(frozen=True, slots=True)
class Account:
    storage: Value = UNIT
    balance: int = 0
    monitor_storage: Value = UNIT

    def __post_init__(self) -> None:
        if not (0 <= self.balance <= U64_MAX):
            raise ValueError(f"account balance out of range: {self.balance}")


class ChainState:
    """Immutable finite map address -> account.

    Functional updates return new snapshots; a held reference never changes,
    so pre-transaction states survive aborts untouched.
    """

    __slots__ = ("_accounts", "_digest", "_storage_digest")

    def __init__(self, accounts: Mapping[Address, Account] = ()):
        self._accounts: dict[Address, Account] = dict(accounts)
        self._digest: Optional[str] = None
        self._storage_digest: Optional[str] = None

    def get(self, addr: Address) -> Account:
        try:
            return self._accounts[addr]
        except KeyError:
            raise ScenarioError(f"no account at address {addr!r}") from None

    def has(self, addr: Address) -> bool:
        return addr in self._accounts

    def balance(self, addr: Address) -> int:
        return self.get(addr).balance

    def storage(self, addr: Address) -> Value:
        return self.get(addr).storage

    def monitor_storage(self, addr: Address) -> Value:
        return self.get(addr).monitor_storage

    def addresses(self) -> tuple[Address, ...]:
        return tuple(self._accounts)

    def total_supply(self) -> int:
        return sum(a.balance for a in self._accounts.values())

    def with_account(self, addr: Address, account: Account) -> "ChainState":
        out = dict(self._accounts)
        out[addr] = account
        return ChainState(out)

    def with_storage(self, addr: Address, storage: Value) -> "ChainState":
        return self.with_account(addr, replace(self.get(addr), storage=storage))

    def with_monitor_storage(self, addr: Address, ms: Value) -> "ChainState":
        return self.with_account(addr, replace(self.get(addr), monitor_storage=ms))

    def move(self, src: Address, dest: Address, money: int) -> "ChainState":
        """Transfer `money` from src to dest; caller checks src affordability."""
        if money == 0:
            return self
        a_src, a_dest = self.get(src), self.get(dest)
        if a_src.balance < money:
            raise ScenarioError("transfer exceeds source balance")
        if a_dest.balance + money > U64_MAX:
            raise ContractError(f"balance overflow at {dest}")
        out = dict(self._accounts)
        out[src] = replace(a_src, balance=a_src.balance - money)
        out[dest] = replace(a_dest, balance=a_dest.balance + money)
        return ChainState(out)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ChainState) and self._accounts == other._accounts

    def __repr__(self) -> str:
        return f"ChainState({self._accounts!r})"

    def items(self) -> Iterable[tuple[Address, Account]]:
        return self._accounts.items()


@lru_cache(maxsize=None)
def _value_blob(v: Value) -> str:
    return json.dumps(canon(v), separators=(",", ":"))


def digest(state: ChainState) -> str:
    """Stable digest of a chain state, independent of mapping iteration order."""
    if state._digest is None:
        payload = "|".join(
            f"{addr}={_value_blob(acct.storage)}:{acct.balance}:{_value_blob(acct.monitor_storage)}"
            for addr, acct in sorted(state.items())
        )
        state._digest = hashlib.sha256(payload.encode()).hexdigest()
    return state._digest


def storage_digest(state: ChainState) -> str:
    """Digest over contract storages only (no balances, no monitor storage);
    hook-isolation checks rely on this staying constant across hook steps."""
    if state._storage_digest is None:
        payload = "|".join(
            f"{addr}={_value_blob(acct.storage)}" for addr, acct in sorted(state.items())
        )
        state._storage_digest = hashlib.sha256(payload.encode()).hexdigest()
    return state._storage_digest


# ---------------------------------------------------------------------------
# Transaction context


@dataclass(frozen=True)
class Context:
    """Block metadata plus transaction-scoped bookkeeping.

    visited/counts/fail_bits/txmem start empty in every transaction;
    gas_remaining only ever decreases within one.
    """

    block_level: int = 0
    timestamp: int = 0
    gas_remaining: int = 0
    visited: tuple[Address, ...] = ()
    counts: Mapping[Address, int] = field(default_factory=dict)
    fail_bits: Mapping[Address, bool] = field(default_factory=dict)
    txmem: Mapping[Address, Value] = field(default_factory=dict)
    tx_money: int = 0

    def visit(self, addr: Address) -> "Context":
        counts = dict(self.counts)
        counts[addr] = counts.get(addr, 0) + 1
        visited = self.visited if addr in self.visited else self.visited + (addr,)
        return replace(self, visited=visited, counts=counts)

    def count_of(self, addr: Address) -> int:
        return self.counts.get(addr, 0)

    def with_gas(self, gas: int) -> "Context":
        return replace(self, gas_remaining=gas)

    def with_fail_bit(self, addr: Address, value: bool) -> "Context":
        bits = dict(self.fail_bits)
        bits[addr] = value
        return replace(self, fail_bits=bits)

    def with_txmem(self, addr: Address, value: Value) -> "Context":
        mem = dict(self.txmem)
        mem[addr] = value
        return replace(self, txmem=mem)


# ---------------------------------------------------------------------------
# Contract definitions and step results


class StepResult:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class StepOk(StepResult):
    new_storage: Value
    emitted: tuple[Operation, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "emitted", tuple(self.emitted))


@dataclass(frozen=True, slots=True)
class StepFail(StepResult):
    reason: str


# step(view, method, param, money, storage, balance) -> StepResult
StepFn = Callable[[Any, str, Value, int, Value, int], StepResult]


@dataclass(frozen=True)
class ContractDef:
    """A contract: one pure step function plus optional hooks.

    Hooks never emit operations. init/begin/end may rewrite monitor storage,
    term is read-only; txmem_init builds the volatile segment from storage;
    bstore_hook must be total, ustore_hook may raise ContractError.
    """

    step: StepFn
    init: Optional[Callable[[Value, int, Value], Value]] = None
    begin: Optional[Callable[[str, Value, int, Value], Value]] = None
    end: Optional[Callable[[tuple[Operation, ...], Value, Value], Value]] = None
    term: Optional[Callable[[Value, int, Value], None]] = None
    txmem_init: Optional[Callable[[Value], Value]] = None
    bstore_hook: Optional[Callable[[Value, int], Value]] = None
    ustore_hook: Optional[Callable[[Value, int], Value]] = None
    recurring_methods: frozenset[str] = frozenset()
    mechanism_uses: frozenset[Mechanism] = frozenset()


Registry = Mapping[Address, ContractDef]


# ---------------------------------------------------------------------------
# Outcomes


class AbortReason:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class ContractFail(AbortReason):
    addr: Address
    text: str


@dataclass(frozen=True, slots=True)
class InsufficientBalance(AbortReason):
    op: Operation


@dataclass(frozen=True, slots=True)
class GasExhausted(AbortReason):
    pass


@dataclass(frozen=True, slots=True)
class MonitorInitFail(AbortReason):
    addr: Address


@dataclass(frozen=True, slots=True)
class MonitorBeginFail(AbortReason):
    addr: Address


@dataclass(frozen=True, slots=True)
class MonitorEndFail(AbortReason):
    addr: Address


@dataclass(frozen=True, slots=True)
class MonitorTermFail(AbortReason):
    addr: Address


@dataclass(frozen=True, slots=True)
class HookupFail(AbortReason):
    addr: Address


@dataclass(frozen=True, slots=True)
class FailBitSet(AbortReason):
    addrs: frozenset[Address]

    def __post_init__(self) -> None:
        object.__setattr__(self, "addrs", frozenset(self.addrs))


@dataclass(frozen=True, slots=True)
class RecurringEscape(AbortReason):
    op: Operation


class Outcome:
    __slots__ = ()

    @property
    def committed(self) -> bool:
        return isinstance(self, Committed)


@dataclass(frozen=True, slots=True)
class Committed(Outcome):
    final: ChainState


@dataclass(frozen=True, slots=True)
class Aborted(Outcome):
    reason: AbortReason


# ---------------------------------------------------------------------------
# Traces


class RecordKind(str, Enum):
    OP = "op"
    INIT = "init"
    BEGIN = "begin"
    END = "end"
    TERM = "term"
    HOOKUP = "hookup"
    FAIL_BIT_CHECK = "fail_bit_check"


@dataclass(frozen=True)
class StepRecord:
    """One trace step. Op records carry enough of the step's inputs
    (storage/balance as seen, mechanism readings) to replay the step function
    and to rebuild per-contract observations."""

    index: int
    kind: RecordKind
    subject: Address
    executed: Optional[Operation]
    queue_before: tuple[Operation, ...]
    queue_after: tuple[Operation, ...]
    emitted: tuple[Operation, ...]
    gas_before: int
    gas_after: int
    state_digest: str
    storage_digest: str
    storage_before: Optional[Value] = None
    storage_after: Optional[Value] = None
    balance_seen: Optional[int] = None
    readings: Mapping[str, Value] = field(default_factory=dict)


@dataclass(frozen=True)
class TraceMeta:
    scheduler: SchedulerKind
    monitor_mode: MonitorMode
    mechanisms: frozenset[Mechanism]
    gas_limit: int
    external: Operation
    block_level: int = 0
    timestamp: int = 0


@dataclass(frozen=True)
class Trace:
    meta: TraceMeta
    records: tuple[StepRecord, ...] = ()

    def ops(self, subject: Optional[Address] = None) -> tuple[StepRecord, ...]:
        return tuple(
            r
            for r in self.records
            if r.kind is RecordKind.OP and (subject is None or r.subject == subject)
        )


@dataclass(frozen=True)
class Observation:
    """Everything one contract invocation can see; equal observations force
    equal step behaviour because step functions are pure."""

    seq_no: int
    method: str
    param: Value
    money: int
    storage_before: Value
    balance_seen: int
    readings: Mapping[str, Value] = field(default_factory=dict)

    _VIEW_FIELDS = ("method", "param", "money", "storage_before", "balance_seen", "readings")

    def same_view(self, other: "Observation") -> bool:
        """Positional metadata (seq_no) excluded; used for cross-run alignment."""
        return all(getattr(self, f) == getattr(other, f) for f in self._VIEW_FIELDS)
