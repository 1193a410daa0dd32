"""JSON encodings for the command-line front end: values, operations, traces,
scenario files, outcomes, and report bundles.

Value shorthand: null/bool/int/str/list map to the unit/bool/int/text/seq
variants; objects are records. Amounts and addresses use the tagged escapes
{"$amt": n} and {"$addr": "a"}; "$"-prefixed record keys are reserved.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

from .core import (
    Committed,
    ContractFail,
    FailBitSet,
    HookupFail,
    InsufficientBalance,
    Mechanism,
    MonitorBeginFail,
    MonitorEndFail,
    MonitorInitFail,
    MonitorMode,
    MonitorTermFail,
    Operation,
    Outcome,
    RecordKind,
    RecurringEscape,
    ScenarioError,
    SchedulerKind,
    StepRecord,
    Trace,
    TraceMeta,
    UNIT,
    VAddr,
    VAmt,
    VBool,
    VInt,
    VRec,
    VSeq,
    VText,
    VUnit,
    Value,
    digest,
)
from .engine import EngineConfig
from .scenarios import (
    ContractSpec,
    CounterexampleReport,
    CrossObsClaim,
    ExternalSpec,
    HookupInputClaim,
    ObsClaim,
    QueueClaim,
    ScenarioSpec,
    TxSpec,
    VerdictClaim,
    reason_kind,
)

# ---------------------------------------------------------------------------
# Values


def value_to_json(v: Value) -> Any:
    if isinstance(v, VUnit):
        return None
    if isinstance(v, VBool):
        return v.b
    if isinstance(v, VInt):
        return v.n
    if isinstance(v, VAmt):
        return {"$amt": v.n}
    if isinstance(v, VAddr):
        return {"$addr": v.addr}
    if isinstance(v, VText):
        return v.s
    if isinstance(v, VSeq):
        return [value_to_json(x) for x in v.items]
    if isinstance(v, VRec):
        return {k: value_to_json(x) for k, x in v.entries}
    raise ScenarioError(f"cannot serialize value {v!r}")


def value_from_json(obj: Any) -> Value:
    if obj is None:
        return UNIT
    if isinstance(obj, bool):
        return VBool(obj)
    if isinstance(obj, int):
        return VInt(obj)
    if isinstance(obj, str):
        return VText(obj)
    if isinstance(obj, list):
        return VSeq(tuple(value_from_json(x) for x in obj))
    if isinstance(obj, dict):
        if set(obj) == {"$amt"}:
            return VAmt(int(obj["$amt"]))
        if set(obj) == {"$addr"}:
            return VAddr(str(obj["$addr"]))
        bad = [k for k in obj if k.startswith("$")]
        if bad:
            raise ScenarioError(f"reserved record keys: {bad}")
        return VRec({k: value_from_json(x) for k, x in obj.items()})
    raise ScenarioError(f"cannot parse value from {obj!r}")


# ---------------------------------------------------------------------------
# Operations, records, traces


def op_to_json(op: Operation) -> dict:
    return {
        "dest": op.dest,
        "src": op.src,
        "method": op.method,
        "param": value_to_json(op.param),
        "money": op.money,
        "recurring": op.recurring,
    }


def op_from_json(obj: Mapping) -> Operation:
    return Operation(
        dest=obj["dest"],
        src=obj["src"],
        method=obj["method"],
        param=value_from_json(obj.get("param")),
        money=int(obj.get("money", 0)),
        recurring=bool(obj.get("recurring", False)),
    )


def record_to_json(r: StepRecord) -> dict:
    out = {
        "index": r.index,
        "kind": r.kind.value,
        "subject": r.subject,
        "executed": op_to_json(r.executed) if r.executed is not None else None,
        "queue_before": [op_to_json(o) for o in r.queue_before],
        "queue_after": [op_to_json(o) for o in r.queue_after],
        "emitted": [op_to_json(o) for o in r.emitted],
        "gas_before": r.gas_before,
        "gas_after": r.gas_after,
        "state_digest": r.state_digest,
        "storage_digest": r.storage_digest,
        "balance_seen": r.balance_seen,
        "readings": {k: value_to_json(v) for k, v in r.readings.items()},
    }
    if r.storage_before is not None:
        out["storage_before"] = value_to_json(r.storage_before)
    if r.storage_after is not None:
        out["storage_after"] = value_to_json(r.storage_after)
    return out


def record_from_json(obj: Mapping) -> StepRecord:
    return StepRecord(
        index=obj["index"],
        kind=RecordKind(obj["kind"]),
        subject=obj["subject"],
        executed=op_from_json(obj["executed"]) if obj.get("executed") else None,
        queue_before=tuple(op_from_json(o) for o in obj["queue_before"]),
        queue_after=tuple(op_from_json(o) for o in obj["queue_after"]),
        emitted=tuple(op_from_json(o) for o in obj["emitted"]),
        gas_before=obj["gas_before"],
        gas_after=obj["gas_after"],
        state_digest=obj["state_digest"],
        storage_digest=obj["storage_digest"],
        storage_before=value_from_json(obj["storage_before"]) if "storage_before" in obj else None,
        storage_after=value_from_json(obj["storage_after"]) if "storage_after" in obj else None,
        balance_seen=obj.get("balance_seen"),
        readings={k: value_from_json(v) for k, v in obj.get("readings", {}).items()},
    )


def meta_to_json(m: TraceMeta) -> dict:
    return {
        "scheduler": m.scheduler.value,
        "monitor_mode": m.monitor_mode.value,
        "mechanisms": sorted(x.value for x in m.mechanisms),
        "gas_limit": m.gas_limit,
        "external": op_to_json(m.external),
        "block_level": m.block_level,
        "timestamp": m.timestamp,
    }


def meta_from_json(obj: Mapping) -> TraceMeta:
    return TraceMeta(
        scheduler=SchedulerKind(obj["scheduler"]),
        monitor_mode=MonitorMode(obj["monitor_mode"]),
        mechanisms=frozenset(Mechanism(x) for x in obj["mechanisms"]),
        gas_limit=obj["gas_limit"],
        external=op_from_json(obj["external"]),
        block_level=obj.get("block_level", 0),
        timestamp=obj.get("timestamp", 0),
    )


def trace_to_json(t: Trace) -> dict:
    return {"meta": meta_to_json(t.meta), "records": [record_to_json(r) for r in t.records]}


def trace_from_json(obj: Mapping) -> Trace:
    return Trace(
        meta=meta_from_json(obj["meta"]),
        records=tuple(record_from_json(r) for r in obj["records"]),
    )


def dump_traces(traces: list[Trace]) -> str:
    """One line per record, with a meta line opening each transaction."""
    lines = []
    for i, t in enumerate(traces):
        lines.append(json.dumps({"tx": i, "meta": meta_to_json(t.meta)}, sort_keys=True))
        for r in t.records:
            lines.append(json.dumps({"tx": i, "record": record_to_json(r)}, sort_keys=True))
    return "\n".join(lines) + "\n"


def load_traces(text: str) -> list[Trace]:
    metas: list[TraceMeta] = []
    records: list[list[StepRecord]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if "meta" in obj:
            if obj["tx"] != len(metas):
                raise ScenarioError("trace file transactions out of order")
            metas.append(meta_from_json(obj["meta"]))
            records.append([])
        elif "record" in obj:
            records[obj["tx"]].append(record_from_json(obj["record"]))
        else:
            raise ScenarioError(f"unrecognized trace line: {line[:80]}")
    return [Trace(meta=m, records=tuple(rs)) for m, rs in zip(metas, records)]


# ---------------------------------------------------------------------------
# Outcomes


def outcome_to_json(o: Outcome) -> dict:
    if isinstance(o, Committed):
        return {"kind": "committed", "state_digest": digest(o.final)}
    reason = o.reason  # type: ignore[union-attr]
    out: dict = {"kind": reason_kind(o)}
    if isinstance(reason, ContractFail):
        out.update(addr=reason.addr, text=reason.text)
    elif isinstance(reason, (InsufficientBalance, RecurringEscape)):
        out.update(op=op_to_json(reason.op))
    elif isinstance(reason, FailBitSet):
        out.update(addrs=sorted(reason.addrs))
    elif isinstance(
        reason,
        (MonitorInitFail, MonitorBeginFail, MonitorEndFail, MonitorTermFail, HookupFail),
    ):
        out.update(addr=reason.addr)
    return out


# ---------------------------------------------------------------------------
# Scenario files


def engine_config_from_json(obj: Mapping) -> EngineConfig:
    return EngineConfig(
        scheduler=SchedulerKind(obj.get("scheduler", "dfs")),
        gas_limit=int(obj.get("gas_limit", 1000)),
        mechanisms=frozenset(Mechanism(x) for x in obj.get("mechanisms", [])),
        monitor_mode=MonitorMode(obj.get("monitor_mode", "none")),
    )


def engine_config_to_json(cfg: EngineConfig) -> dict:
    return {
        "scheduler": cfg.scheduler.value,
        "gas_limit": cfg.gas_limit,
        "mechanisms": sorted(x.value for x in cfg.mechanisms),
        "monitor_mode": cfg.monitor_mode.value,
    }


def scenario_from_json(obj: Mapping) -> ScenarioSpec:
    try:
        engine = engine_config_from_json(obj.get("engine", {}))
        contracts = tuple(
            ContractSpec(
                addr=c["addr"],
                builtin=c["builtin"],
                params=c.get("params", {}),
                balance=int(c.get("balance", 0)),
                storage=value_from_json(c["storage"]) if "storage" in c else None,
                monitor_storage=(
                    value_from_json(c["monitor_storage"]) if "monitor_storage" in c else None
                ),
            )
            for c in obj.get("contracts", [])
        )
        externals = tuple(
            ExternalSpec(addr=e["addr"], balance=int(e.get("balance", 0)))
            for e in obj.get("externals", [])
        )
        transactions = tuple(
            TxSpec(
                dest=t["dest"],
                method=t["method"],
                param=value_from_json(t.get("param")),
                money=int(t.get("money", 0)),
                gas_limit=int(t["gas_limit"]) if "gas_limit" in t else None,
                src=t.get("src"),
            )
            for t in obj.get("transactions", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    return ScenarioSpec(
        engine=engine, contracts=contracts, externals=externals, transactions=transactions
    )


def scenario_to_json(spec: ScenarioSpec) -> dict:
    return {
        "engine": engine_config_to_json(spec.engine),
        "contracts": [
            {
                "addr": c.addr,
                "builtin": c.builtin,
                "params": dict(c.params),
                "balance": c.balance,
                **({"storage": value_to_json(c.storage)} if c.storage is not None else {}),
                **(
                    {"monitor_storage": value_to_json(c.monitor_storage)}
                    if c.monitor_storage is not None
                    else {}
                ),
            }
            for c in spec.contracts
        ],
        "externals": [{"addr": e.addr, "balance": e.balance} for e in spec.externals],
        "transactions": [
            {
                "dest": t.dest,
                "method": t.method,
                "param": value_to_json(t.param),
                "money": t.money,
                **({"gas_limit": t.gas_limit} if t.gas_limit is not None else {}),
                **({"src": t.src} if t.src is not None else {}),
            }
            for t in spec.transactions
        ],
    }


# ---------------------------------------------------------------------------
# Counter-example report bundles


def report_to_json(r: CounterexampleReport) -> dict:
    return {
        "name": r.name,
        "conclusion": r.conclusion,
        "traces": {k: trace_to_json(t) for k, t in r.traces.items()},
        "verdicts": {k: outcome_to_json(o) for k, o in r.verdicts.items()},
        "obs_claims": [
            {
                "trace_a": c.trace_a,
                "trace_b": c.trace_b,
                "subject": c.subject,
                "upto": c.upto,
                "expect_equal": c.expect_equal,
                "note": c.note,
            }
            for c in r.obs_claims
        ],
        "cross_obs_claims": [
            {
                "trace_a": c.trace_a,
                "invocation_a": c.invocation_a,
                "trace_b": c.trace_b,
                "invocation_b": c.invocation_b,
                "subject": c.subject,
                "note": c.note,
            }
            for c in r.cross_obs_claims
        ],
        "queue_claims": [
            {"trace": c.trace, "shapes": [list(s) for s in c.shapes], "note": c.note}
            for c in r.queue_claims
        ],
        "verdict_claims": [
            {"trace": c.trace, "expect": c.expect, "note": c.note} for c in r.verdict_claims
        ],
        "hookup_claims": [
            {"trace_a": c.trace_a, "trace_b": c.trace_b, "subject": c.subject, "note": c.note}
            for c in r.hookup_claims
        ],
    }


def report_from_json(obj: Mapping) -> CounterexampleReport:
    traces = {k: trace_from_json(t) for k, t in obj["traces"].items()}
    # Verdicts round-trip as their serialized kinds; claims compare kinds only.
    return CounterexampleReport(
        name=obj["name"],
        traces=traces,
        verdicts={k: _outcome_stub(v) for k, v in obj["verdicts"].items()},
        obs_claims=tuple(
            ObsClaim(
                c["trace_a"], c["trace_b"], c["subject"], c["upto"], c["expect_equal"],
                c.get("note", ""),
            )
            for c in obj.get("obs_claims", [])
        ),
        cross_obs_claims=tuple(
            CrossObsClaim(
                c["trace_a"], c["invocation_a"], c["trace_b"], c["invocation_b"],
                c["subject"], c.get("note", ""),
            )
            for c in obj.get("cross_obs_claims", [])
        ),
        queue_claims=tuple(
            QueueClaim(c["trace"], tuple(tuple(s) for s in c["shapes"]), c.get("note", ""))
            for c in obj.get("queue_claims", [])
        ),
        verdict_claims=tuple(
            VerdictClaim(c["trace"], c["expect"], c.get("note", ""))
            for c in obj.get("verdict_claims", [])
        ),
        hookup_claims=tuple(
            HookupInputClaim(c["trace_a"], c["trace_b"], c["subject"], c.get("note", ""))
            for c in obj.get("hookup_claims", [])
        ),
        conclusion=obj.get("conclusion", ""),
    )


class _OutcomeStub(Outcome):
    """Deserialized verdict: carries only the outcome kind for claim checks."""

    __slots__ = ("kind",)

    def __init__(self, kind: str):
        self.kind = kind


def _outcome_stub(obj: Mapping) -> Outcome:
    return _OutcomeStub(obj["kind"])
