"""Typed per-pass summary records, validation of provider JSON, and the
append-only summary store."""

from __future__ import annotations

import collections.abc
import dataclasses
import hashlib
import json
import logging
import os
import re
import threading
import time
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping, Optional, Union, get_args, get_origin

from .callgraph import CallGraph
from .extractor import FunctionRecord

log = logging.getLogger(__name__)

MAX_SUMMARY_BYTES = 64 * 1024

PASSES = ("alloc", "free", "init", "memsafe", "leak", "int", "external", "verify")

Severity = Literal["high", "medium", "low"]
ContractKind = Literal[
    "disallow_null", "allow_null", "not_freed", "initialized", "buffer_size", "non_negative"
]
CONTRACT_KINDS = get_args(ContractKind)
MEMORY_ISSUE_KINDS = (
    "null_deref", "buffer_overflow", "use_after_free",
    "double_free", "uninitialized_use", "invalid_free",
)
INT_ISSUE_KINDS = ("integer_overflow", "division_by_zero", "shift_ub")
LEAK_ISSUE_KIND = "memory_leak"
IssueKind = Literal[
    "null_deref", "buffer_overflow", "use_after_free", "double_free",
    "uninitialized_use", "invalid_free", "integer_overflow", "division_by_zero",
    "shift_ub", "memory_leak",
]


class SchemaError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class StoreIO(OSError):
    pass


def _extra():
    return field(default_factory=dict, compare=False, repr=False)


# --------------------------------------------------------------------------
# record types


@dataclass(frozen=True)
class Contract:
    target: str
    contract_kind: ContractKind
    description: str = ""
    size_expr: Optional[str] = None
    relationship: Optional[Literal["byte_count", "element_count"]] = None
    condition: Optional[str] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class ParamRole:
    role: str = ""
    used_in_allocation: bool = False
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class Allocation:
    type: Literal["heap", "static", "parameter_derived", "escaped_stack"]
    source: str
    size_expr: Optional[str] = None
    size_params: tuple[str, ...] = ()
    returned: bool = False
    stored_to: Optional[str] = None
    may_be_null: bool = True
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class BufferSizePair:
    buffer: str
    size: str
    kind: Literal["param_pair", "struct_field", "flexible_array"]
    relationship: str = ""
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class AllocationSummary:
    function: str
    description: str
    allocations: tuple[Allocation, ...]
    parameters: Mapping[str, ParamRole] = field(default_factory=dict)
    buffer_size_pairs: tuple[BufferSizePair, ...] = ()
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class FreeEntry:
    target: str
    target_kind: Literal["parameter", "field", "local", "return_value"]
    deallocator: str
    conditional: bool = False
    condition: Optional[str] = None
    nulled_after: bool = False
    description: Optional[str] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class FreeSummary:
    function: str
    description: str
    frees: tuple[FreeEntry, ...]
    resource_releases: tuple[FreeEntry, ...] = ()
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class InitEntry:
    target: str
    target_kind: Literal["parameter", "field", "return_value"]
    initializer: str = ""
    byte_count: Optional[str] = None
    conditional: bool = False
    condition: Optional[str] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class RangeFact:
    target: str
    range: str
    description: str = ""
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class InitSummary:
    function: str
    description: str
    inits: tuple[InitEntry, ...]
    output_ranges: tuple[RangeFact, ...] = ()
    noreturn: bool = False
    noreturn_condition: Optional[str] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class MemsafeSummary:
    function: str
    description: str
    contracts: tuple[Contract, ...]
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class Leak:
    allocation: str
    reason: str
    severity: Severity
    stored_to: Optional[str] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class SimplifiedAllocation:
    source: str
    size_expr: Optional[str] = None
    returned: bool = False
    stored_to: Optional[str] = None
    may_be_null: bool = True
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class SimplifiedFree:
    target: str
    target_kind: Literal["parameter", "field"]
    deallocator: str
    conditional: bool = False
    condition: Optional[str] = None
    description: Optional[str] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class LeakSummary:
    function: str
    description: str
    leaks: tuple[Leak, ...]
    simplified_allocations: tuple[SimplifiedAllocation, ...] = ()
    simplified_frees: tuple[SimplifiedFree, ...] = ()
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class Issue:
    location: str
    issue_kind: IssueKind
    description: str
    severity: Severity
    callee: Optional[str] = None
    contract_kind: Optional[ContractKind] = None
    # set by the driver when collecting issues into a report
    function: Optional[str] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class IntSummary:
    function: str
    description: str
    issues: tuple[Issue, ...]
    constraints: tuple[RangeFact, ...] = ()
    output_ranges: tuple[RangeFact, ...] = ()
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class VerificationSummary:
    function: str
    description: str
    issues: tuple[Issue, ...]
    simplified_contracts: tuple[Contract, ...] = ()
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class ExternalSummary:
    allocation: Optional[AllocationSummary] = None
    free: Optional[FreeSummary] = None
    init: Optional[InitSummary] = None
    memsafe: Optional[MemsafeSummary] = None
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class ProgramSummary:
    """Whole-program answer of the baseline prompt."""

    issues: tuple[Issue, ...]
    function: str = "<program>"
    description: str = ""
    extra: Mapping[str, Any] = _extra()


@dataclass(frozen=True)
class BlockSummary:
    """Response to a block prompt; only its prose summary is threaded on."""

    summary: str
    suggested_name: str = ""
    suggested_signature: str = ""
    extra: Mapping[str, Any] = _extra()


SummaryRecord = Union[
    AllocationSummary, FreeSummary, InitSummary, MemsafeSummary,
    LeakSummary, IntSummary, VerificationSummary, ExternalSummary,
]

PASS_TYPES: dict[str, type] = {
    "alloc": AllocationSummary,
    "free": FreeSummary,
    "init": InitSummary,
    "memsafe": MemsafeSummary,
    "leak": LeakSummary,
    "int": IntSummary,
    "verify": VerificationSummary,
    "external": ExternalSummary,
    "block": BlockSummary,
    "baseline": ProgramSummary,
}


# --------------------------------------------------------------------------
# validation

_MISSING = object()
_HINTS: dict[type, dict[str, Any]] = {}


def _hints(cls: type) -> dict[str, Any]:
    if cls not in _HINTS:
        _HINTS[cls] = typing.get_type_hints(cls)
    return _HINTS[cls]


def _norm_enum(value: str) -> str:
    return value.strip().lower().replace(" ", "_").replace("-", "_")


class _Validator:
    def __init__(self):
        self.errors: list[str] = []
        self.warnings: list[str] = []

    def convert(self, tp, value, path: str):
        origin = get_origin(tp)
        if origin is Union or origin is types.UnionType:
            args = [a for a in get_args(tp) if a is not type(None)]
            if value is None or (isinstance(value, str) and value.strip().lower() in ("", "null", "none")):
                return None
            return self.convert(args[0], value, path)
        if origin is Literal:
            allowed = get_args(tp)
            if isinstance(value, str) and _norm_enum(value) in allowed:
                return _norm_enum(value)
            self.errors.append(f"{path}: {value!r} is not one of {'|'.join(allowed)}")
            return _MISSING
        if tp is str:
            if isinstance(value, str):
                return value
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return str(value)
            self.errors.append(f"{path}: expected a string, got {type(value).__name__}")
            return _MISSING
        if tp is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.strip().lower() in ("true", "false"):
                return value.strip().lower() == "true"
            self.errors.append(f"{path}: expected a boolean, got {value!r}")
            return _MISSING
        if origin is tuple:
            (item,) = get_args(tp)[:1]
            if not isinstance(value, list):
                self.errors.append(f"{path}: expected an array")
                return _MISSING
            out = [self.convert(item, v, f"{path}[{i}]") for i, v in enumerate(value)]
            return tuple(out)
        if origin in (dict, collections.abc.Mapping):
            _, vt = get_args(tp)
            if not isinstance(value, dict):
                self.errors.append(f"{path}: expected an object")
                return _MISSING
            return {str(k): self.convert(vt, v, f"{path}.{k}") for k, v in value.items()}
        if dataclasses.is_dataclass(tp):
            return self.record(tp, value, path)
        raise TypeError(f"unsupported schema type {tp!r}")

    def record(self, cls: type, raw, path: str):
        if not isinstance(raw, dict):
            self.errors.append(f"{path or '<root>'}: expected an object")
            return _MISSING
        hints = _hints(cls)
        kwargs: dict[str, Any] = {}
        known = set()
        for f in dataclasses.fields(cls):
            if f.name == "extra":
                continue
            known.add(f.name)
            fpath = f"{path}.{f.name}" if path else f.name
            required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
            if f.name not in raw or (raw[f.name] is None and required):
                if required:
                    self.errors.append(f"{fpath}: missing required field")
                continue
            got = self.convert(hints[f.name], raw[f.name], fpath)
            if got is _MISSING:
                continue
            if isinstance(got, tuple) and any(v is _MISSING for v in got):
                continue
            if isinstance(got, dict) and any(v is _MISSING for v in got.values()):
                continue
            kwargs[f.name] = got
        extra = {k: v for k, v in raw.items() if k not in known}
        kwargs = _post_check(cls, kwargs, path, self)
        try:
            return cls(**kwargs, extra=extra)
        except TypeError:
            return _MISSING  # a required field already produced an error


def _post_check(cls, kw: dict, path: str, v: _Validator) -> dict:
    where = path or "<root>"
    if cls is Contract and "contract_kind" in kw:
        if kw["contract_kind"] == "buffer_size":
            if not kw.get("size_expr"):
                v.errors.append(f"{where}.size_expr: required for buffer_size contracts")
            if not kw.get("relationship"):
                v.warnings.append(f"{where}.relationship: missing, assuming byte_count")
                kw["relationship"] = "byte_count"
        else:
            for name in ("size_expr", "relationship"):
                if kw.get(name) is not None:
                    v.warnings.append(f"{where}.{name}: ignored for {kw['contract_kind']} contracts")
                    kw[name] = None
    if cls is FreeEntry and kw.get("condition") and not kw.get("conditional"):
        v.warnings.append(f"{where}.conditional: condition given, marking conditional")
        kw["conditional"] = True
    if cls is Issue and kw.get("callee") and not kw.get("contract_kind"):
        v.errors.append(f"{where}.contract_kind: required when callee is set")
    if cls is VerificationSummary:
        for i, issue in enumerate(kw.get("issues", ())):
            if issue is not _MISSING and issue.issue_kind not in MEMORY_ISSUE_KINDS:
                v.errors.append(f"issues[{i}].issue_kind: {issue.issue_kind!r} is not a memory-safety issue kind")
    if cls is IntSummary:
        for i, issue in enumerate(kw.get("issues", ())):
            if issue is not _MISSING and issue.issue_kind not in INT_ISSUE_KINDS:
                v.errors.append(f"issues[{i}].issue_kind: {issue.issue_kind!r} is not an integer UB kind")
    return kw


def validate(pass_: str, raw: Any, params: list[str] | None = None):
    """Turn parsed provider JSON into a typed summary or raise SchemaError.

    `params` enables the semantic checks that only warn (size_params and
    contract targets naming declared parameters).
    """
    cls = PASS_TYPES.get(pass_)
    if cls is None:
        raise SchemaError([f"unknown pass {pass_!r}"])
    try:
        size = len(json.dumps(raw, separators=(",", ":"), default=str))
    except (TypeError, ValueError):
        size = 0
    if size > MAX_SUMMARY_BYTES:
        raise SchemaError([f"<root>: summary is {size} bytes, over the {MAX_SUMMARY_BYTES} byte cap"])
    if pass_ == "external" and isinstance(raw, dict):
        raw = _drop_unknown_external_contracts(raw)
    v = _Validator()
    record = v.record(cls, raw, "")
    if v.errors or record is _MISSING:
        raise SchemaError(v.errors or ["<root>: invalid record"])
    if params is not None:
        v.warnings.extend(_semantic_warnings(record, params))
    for w in v.warnings:
        log.warning("%s summary: %s", pass_, w)
    return record


def _drop_unknown_external_contracts(raw: dict) -> dict:
    mem = raw.get("memsafe")
    if not isinstance(mem, dict) or not isinstance(mem.get("contracts"), list):
        return raw
    kept = []
    for c in mem["contracts"]:
        kind = c.get("contract_kind") if isinstance(c, dict) else None
        if isinstance(kind, str) and _norm_enum(kind) not in CONTRACT_KINDS:
            log.warning("external contract kind %r dropped", kind)
            continue
        kept.append(c)
    return {**raw, "memsafe": {**mem, "contracts": kept}}


def _semantic_warnings(record, params: list[str]) -> list[str]:
    out = []
    pset = set(params)
    if isinstance(record, AllocationSummary):
        for i, a in enumerate(record.allocations):
            for p in a.size_params:
                if p not in pset:
                    out.append(f"allocations[{i}].size_params: {p!r} is not a parameter")
    contracts = ()
    if isinstance(record, MemsafeSummary):
        contracts = record.contracts
    elif isinstance(record, VerificationSummary):
        contracts = record.simplified_contracts
    for i, c in enumerate(contracts):
        if not any(tok in pset for tok in _identifiers(c.target)):
            out.append(f"contracts[{i}].target: {c.target!r} does not mention a parameter")
    return out


def _identifiers(text: str) -> list[str]:
    return re.findall(r"[A-Za-z_]\w*", text)


def serialize(record) -> Any:
    if dataclasses.is_dataclass(record):
        out = {}
        for f in dataclasses.fields(record):
            if f.name == "extra":
                continue
            out[f.name] = serialize(getattr(record, f.name))
        for k, v in record.extra.items():
            out.setdefault(k, v)
        return out
    if isinstance(record, tuple):
        return [serialize(v) for v in record]
    if isinstance(record, Mapping):
        return {k: serialize(v) for k, v in record.items()}
    return record


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def strip_prose(value: Any) -> Any:
    """Serialized form without free-text description fields."""
    if isinstance(value, dict):
        return {k: strip_prose(v) for k, v in value.items() if k != "description"}
    if isinstance(value, list):
        return [strip_prose(v) for v in value]
    return value


def same_facts(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return canonical_json(strip_prose(serialize(a))) == canonical_json(strip_prose(serialize(b)))


# --------------------------------------------------------------------------
# store


@dataclass(frozen=True)
class SummaryKey:
    function: str
    pass_: str
    input_hash: str

    def __post_init__(self):
        if self.pass_ not in PASSES:
            raise ValueError(f"unknown pass {self.pass_!r}")

    def to_json(self) -> dict:
        return {"function": self.function, "pass": self.pass_, "input_hash": self.input_hash}


def input_hash(fn: FunctionRecord, pass_: str, template_version: str, consumed: Any) -> str:
    """Hash over everything a summary depends on."""
    h = hashlib.sha256()
    h.update(canonical_json({
        "pass": pass_,
        "template": template_version,
        "body": fn.body,
        "signature": fn.signature,
        "name": fn.name,
        "consumed": consumed,
    }).encode("utf-8"))
    return h.hexdigest()


class SummaryStore:
    """Append-only JSON-lines file with an in-memory index; last write wins.

    With ``path=None`` the store lives in memory only.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._index: dict[SummaryKey, Any] = {}
        self._latest: dict[tuple[str, str], Any] = {}
        self._fh = None
        if self.path is not None:
            self._load()
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._fh = open(self.path, "a", encoding="utf-8")
            except OSError as exc:
                raise StoreIO(f"cannot open store {self.path} for writing: {exc}") from exc

    def _load(self):
        if not self.path.exists():
            return
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError) as exc:
            raise StoreIO(f"cannot read store {self.path}: {exc}") from exc
        for n, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                k = entry["key"]
                key = SummaryKey(k["function"], k["pass"], k["input_hash"])
                record = validate(key.pass_, entry["record"])
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("%s:%d: skipping unreadable store line (%s)", self.path, n, exc)
                continue
            self._index[key] = record
            self._latest[(key.function, key.pass_)] = record

    def upsert(self, key: SummaryKey, record) -> Any:
        line = canonical_json({"key": key.to_json(), "record": serialize(record), "ts": int(time.time())})
        with self._lock:
            previous = self._index.get(key)
            if self._fh is not None:
                try:
                    self._fh.write(line + "\n")
                    self._fh.flush()
                except OSError as exc:
                    raise StoreIO(f"cannot append to {self.path}: {exc}") from exc
            self._index[key] = record
            self._latest[(key.function, key.pass_)] = record
        return previous

    def lookup(self, key: SummaryKey):
        with self._lock:
            return self._index.get(key)

    def latest(self, function: str, pass_: str):
        with self._lock:
            return self._latest.get((function, pass_))

    def functions(self) -> list[str]:
        with self._lock:
            return sorted({f for f, _ in self._latest})

    def close(self):
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self):
        return len(self._index)


# --------------------------------------------------------------------------
# callee context

CONSUMES: dict[str, tuple[str, ...]] = {
    "alloc": ("alloc",),
    "free": ("free",),
    "init": ("init",),
    # PRE comments come from callee contracts, POST comments from effects
    "memsafe": ("memsafe", "alloc", "free", "init"),
    "leak": ("alloc", "free", "leak"),
    "int": ("int",),
    "verify": ("verify", "memsafe", "alloc", "free", "init", "leak", "int"),
}
OWN_INPUTS: dict[str, tuple[str, ...]] = {
    "leak": ("alloc", "free"),
    "verify": ("memsafe", "alloc", "free"),
}
_EXTERNAL_PART = {"alloc": "allocation", "free": "free", "init": "init", "memsafe": "memsafe", "verify": "memsafe"}


@dataclass(frozen=True)
class CalleeEntry:
    name: str
    key: str
    is_external: bool
    lib_attrs: frozenset[str]
    params: tuple[str, ...]
    summaries: Mapping[str, Any]

    def get(self, pass_: str):
        return self.summaries.get(pass_)

    def contracts(self) -> tuple[Contract, ...]:
        """Simplified caller obligations, falling back to raw memsafe ones."""
        ver = self.summaries.get("verify")
        if isinstance(ver, VerificationSummary):
            return ver.simplified_contracts
        mem = self.summaries.get("memsafe")
        if isinstance(mem, MemsafeSummary):
            return mem.contracts
        return ()


@dataclass(frozen=True)
class CalleeContext:
    pass_: str
    entries: tuple[CalleeEntry, ...] = ()

    def __bool__(self):
        return bool(self.entries)

    def entry(self, key: str) -> CalleeEntry | None:
        return next((e for e in self.entries if e.key == key), None)

    def to_json(self) -> list:
        return [
            [e.key, sorted(e.lib_attrs), {p: serialize(s) if s is not None else None for p, s in sorted(e.summaries.items())}]
            for e in self.entries
        ]


def _stub_summary(store: SummaryStore, key: str, pass_: str):
    ext = store.latest(key, "external")
    part = _EXTERNAL_PART.get(pass_)
    if not isinstance(ext, ExternalSummary) or part is None:
        return None
    return getattr(ext, part)


def callee_context(store: SummaryStore, fn: FunctionRecord, graph: CallGraph, pass_: str) -> CalleeContext:
    wanted = CONSUMES.get(pass_)
    if wanted is None:
        raise ValueError(f"pass {pass_!r} consumes no callee context")
    entries = []
    for key in graph.callees(fn.key):
        if key == fn.key:
            continue
        callee = graph.functions.get(key) or FunctionRecord.external(key.split("::")[-1])
        sums = {}
        for p in wanted:
            rec = store.latest(key, p)
            if rec is None and callee.is_external:
                rec = _stub_summary(store, key, p)
            sums[p] = rec
        entries.append(
            CalleeEntry(
                name=callee.name,
                key=key,
                is_external=callee.is_external,
                lib_attrs=callee.lib_attrs,
                params=tuple(callee.param_names),
                summaries=sums,
            )
        )
    return CalleeContext(pass_, tuple(entries))


def own_summaries(store: SummaryStore, fn: FunctionRecord, pass_: str) -> dict[str, Any]:
    return {p: store.latest(fn.key, p) for p in OWN_INPUTS.get(pass_, ())}
