"""Bottom-up pass scheduling, block mode, verification and the baseline."""

from __future__ import annotations

import dataclasses
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .callgraph import AnalysisOrder, CallGraph, build_call_graph, compute_analysis_order, load_lib_attrs
from .extractor import DEFAULT_BLOCK_BUDGET, FunctionRecord, Program, TypeContext, split_function_blocks
from .llm import JSON_ONLY_SUFFIX, CountingProvider, JsonExtractError, ProviderError, extract_json
from .prompts import (
    BLOCK_PASSES,
    DEFAULT_BASELINE_BUDGET,
    PROPERTIES,
    ContextOverflow,
    PromptBundle,
    Templates,
    annotate_callsites,
    builtin_templates,
    render_baseline_prompt,
    render_block_prompt,
    render_external_prompt,
    render_merge_prompt,
    render_summarizer_prompt,
    render_verifier_prompt,
    type_defs_section,
)
from .summaries import (
    CONSUMES,
    LEAK_ISSUE_KIND,
    IntSummary,
    Issue,
    LeakSummary,
    MemsafeSummary,
    SchemaError,
    SummaryKey,
    SummaryStore,
    VerificationSummary,
    callee_context,
    input_hash,
    own_summaries,
    same_facts,
    serialize,
    validate,
)

log = logging.getLogger(__name__)

PASS_PLANS: dict[str, tuple[str, ...]] = {
    "valid-memsafety": ("alloc", "free", "init", "memsafe", "verify"),
    "valid-memcleanup": ("alloc", "free", "leak"),
    "no-overflow": ("int",),
}
FATAL_SEVERITIES = ("high", "medium")
WHOLE_PROGRAM = "<whole-program>"


@dataclass(frozen=True)
class PassPlan:
    property: str
    passes: tuple[str, ...]

    @classmethod
    def for_property(cls, property_: str) -> "PassPlan":
        if property_ not in PASS_PLANS:
            raise ValueError(f"unknown property {property_!r}; expected one of {sorted(PASS_PLANS)}")
        return cls(property_, PASS_PLANS[property_])


@dataclass(frozen=True)
class DriverConfig:
    block_budget: int = DEFAULT_BLOCK_BUDGET
    fixpoint_bound: int = 3
    cache_mode: str = "none"
    callee_format: str = "annotate"
    entry: str = "main"
    baseline_budget: int = DEFAULT_BASELINE_BUDGET
    jobs: int = 1
    templates: Templates | None = None

    def __post_init__(self):
        if self.fixpoint_bound < 1:
            raise ValueError("fixpoint_bound must be >= 1")
        if self.block_budget < 1:
            raise ValueError("block_budget must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def tpl(self) -> Templates:
        return self.templates or builtin_templates()


@dataclass(frozen=True)
class FailedFunction:
    function: str
    pass_: str
    reason: str

    def to_json(self) -> dict:
        return {"function": self.function, "pass": self.pass_, "reason": self.reason}


@dataclass
class PassReport:
    pass_: str
    summarized: int = 0
    cached: int = 0
    failed: list[FailedFunction] = field(default_factory=list)
    unstable: list[str] = field(default_factory=list)
    # first member of each recursive SCC -> iterations run
    iterations: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "pass": self.pass_,
            "summarized": self.summarized,
            "cached": self.cached,
            "failed": [f.to_json() for f in self.failed],
            "unstable": self.unstable,
            "iterations": self.iterations,
        }


@dataclass
class VerificationReport:
    program: str
    property: str
    mode: str
    verdict: str
    issues: list[Issue] = field(default_factory=list)
    failed_functions: list[FailedFunction] = field(default_factory=list)
    wall_seconds: float = 0.0
    provider_calls: int = 0
    provider_errors: int = 0
    context_overflow: bool = False
    unstable: list[str] = field(default_factory=list)
    passes: list[PassReport] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "program": self.program,
            "property": self.property,
            "mode": self.mode,
            "verdict": self.verdict,
            "issues": [serialize(i) for i in self.issues],
            "failed_functions": [f.to_json() for f in self.failed_functions],
            "wall_seconds": round(self.wall_seconds, 3),
            "provider_calls": self.provider_calls,
            "provider_errors": self.provider_errors,
            "context_overflow": self.context_overflow,
            "unstable": self.unstable,
            "passes": [p.to_json() for p in self.passes],
        }


class _Failed(Exception):
    pass


def _ask(provider, bundle: PromptBundle, pass_: str, params: Sequence[str] | None = None):
    """One completion plus at most one re-prompt on unparseable or invalid output."""
    for attempt in range(2):
        try:
            text = provider.complete(bundle).text
        except ProviderError as exc:
            raise _Failed(f"provider: {exc}") from exc
        try:
            return validate(pass_, extract_json(text), list(params) if params is not None else None)
        except (JsonExtractError, SchemaError) as exc:
            if attempt == 1:
                raise _Failed(f"{type(exc).__name__}: {exc}") from exc
            log.info("%s: re-prompting after %s", bundle.meta.get("function"), exc)
            bundle = bundle.with_suffix(JSON_ONLY_SUFFIX)


class PassRunner:
    """Runs one pass over a call graph, writing validated summaries to the store."""

    def __init__(
        self,
        pass_: str,
        graph: CallGraph,
        store: SummaryStore,
        provider,
        cfg: DriverConfig,
        type_ctx: TypeContext | None = None,
    ):
        if pass_ not in CONSUMES:
            raise ValueError(f"unknown pass {pass_!r}")
        self.pass_ = pass_
        self.graph = graph
        self.store = store
        self.provider = provider
        self.cfg = cfg
        self.type_ctx = type_ctx
        self.report = PassReport(pass_)
        self._lock = threading.Lock()

    # -- bookkeeping

    def _count(self, attr: str):
        with self._lock:
            setattr(self.report, attr, getattr(self.report, attr) + 1)

    def _fail(self, fn: str, reason: str):
        log.warning("%s pass: %s FAILED: %s", self.pass_, fn, reason)
        with self._lock:
            self.report.failed.append(FailedFunction(fn, self.pass_, reason))

    # -- external stubs

    def external(self, stub: FunctionRecord):
        key = SummaryKey(stub.key, "external", input_hash(stub, "external", self.cfg.tpl.version, None))
        if self.store.lookup(key) is not None:
            self._count("cached")
            return
        try:
            rec = _ask(self.provider, render_external_prompt(stub.name, templates=self.cfg.templates), "external")
        except _Failed as exc:
            self._fail(stub.key, str(exc))
            return
        self.store.upsert(key, rec)
        self._count("summarized")

    # -- defined functions

    def _inputs(self, fn: FunctionRecord):
        ctx = callee_context(self.store, fn, self.graph, self.pass_)
        own = own_summaries(self.store, fn, self.pass_)
        annotated = None
        if self.pass_ == "verify" or (self.pass_ == "memsafe" and self.cfg.callee_format == "annotate"):
            annotated = annotate_callsites(fn, self.graph, self.store, self.pass_)
        consumed = {
            "callees": ctx.to_json(),
            "own": {p: serialize(r) if r is not None else None for p, r in sorted(own.items())},
            "cache_mode": self.cfg.cache_mode,
            "callee_format": self.cfg.callee_format if self.pass_ == "memsafe" else None,
            "entry": self.pass_ == "leak" and fn.name == self.cfg.entry,
            "types": type_defs_section(self.type_ctx, fn.body) if self.pass_ == "verify" else None,
            "block_budget": self.cfg.block_budget if len(fn.body) > self.cfg.block_budget else None,
        }
        return ctx, own, annotated, consumed

    def _own_contracts(self, own: dict) -> tuple:
        mem = own.get("memsafe")
        return mem.contracts if isinstance(mem, MemsafeSummary) else ()

    def _whole(self, fn, ctx, own, annotated):
        if self.pass_ == "verify":
            bundle = render_verifier_prompt(
                fn, self._own_contracts(own), annotated, ctx, self.type_ctx,
                own_alloc=own.get("alloc"), own_free=own.get("free"), templates=self.cfg.templates,
            )
        else:
            bundle = render_summarizer_prompt(
                self.pass_, fn, ctx, self.type_ctx, self.cfg.cache_mode,
                own=own, entry=self.cfg.entry, annotated=annotated,
                callee_format=self.cfg.callee_format, templates=self.cfg.templates,
            )
        return _ask(self.provider, bundle, self.pass_, fn.param_names)

    def _blockwise(self, fn, ctx, own, annotated):
        # memsafe/verify split the annotated body so PRE/POST lines travel with their calls
        target = dataclasses.replace(fn, body=annotated.text) if annotated is not None else fn
        blocks = split_function_blocks(target, self.cfg.block_budget)
        contracts = self._own_contracts(own)
        prior: list[str] = []
        answers: list[str] = []
        for block in blocks:
            bundle = render_block_prompt(self.pass_, fn, block, prior, own_contracts=contracts, templates=self.cfg.templates)
            rec = _ask(self.provider, bundle, "block")
            prior.append(rec.summary)
            answers.append(json.dumps(serialize(rec), indent=2))
        merge = render_merge_prompt(self.pass_, fn, answers, ctx, own_contracts=contracts, templates=self.cfg.templates)
        return _ask(self.provider, merge, self.pass_, fn.param_names)

    def function(self, fn: FunctionRecord):
        """Summarize `fn`; returns the record now current in the store (or None)."""
        ctx, own, annotated, consumed = self._inputs(fn)
        key = SummaryKey(fn.key, self.pass_, input_hash(fn, self.pass_, self.cfg.tpl.version, consumed))
        hit = self.store.lookup(key)
        if hit is not None:
            self._count("cached")
            # re-upsert only if a later write for this function superseded it
            if self.store.latest(fn.key, self.pass_) is not hit:
                self.store.upsert(key, hit)
            return hit
        try:
            if len(fn.body) > self.cfg.block_budget and self.pass_ in BLOCK_PASSES:
                rec = self._blockwise(fn, ctx, own, annotated)
            else:
                rec = self._whole(fn, ctx, own, annotated)
        except _Failed as exc:
            self._fail(fn.key, str(exc))
            return self.store.latest(fn.key, self.pass_)
        self.store.upsert(key, rec)
        self._count("summarized")
        return rec

    def scc(self, members: tuple[str, ...], recursive: bool):
        fns = [self.graph.functions[k] for k in members]
        stubs = [f for f in fns if f.is_external]
        if stubs:
            if self.pass_ != "int":
                for stub in stubs:
                    self.external(stub)
            return
        if not recursive:
            self.function(fns[0])
            return
        bound = self.cfg.fixpoint_bound
        prev = {f.key: self.store.latest(f.key, self.pass_) for f in fns}
        for it in range(1, bound + 1):
            changed = False
            for f in fns:
                rec = self.function(f)
                if not same_facts(prev[f.key], rec):
                    changed = True
                prev[f.key] = rec
            if it > 1 and not changed:
                break
        with self._lock:
            self.report.iterations[members[0]] = it
            if changed and it == bound and bound > 1:
                log.warning("%s pass: SCC %s UNSTABLE after %d iterations", self.pass_, list(members), bound)
                self.report.unstable.extend(members)


def run_pass(
    pass_: str,
    order: AnalysisOrder,
    graph: CallGraph,
    store: SummaryStore,
    provider,
    cfg: DriverConfig | None = None,
    type_ctx: TypeContext | None = None,
) -> PassReport:
    cfg = cfg or DriverConfig()
    runner = PassRunner(pass_, graph, store, provider, cfg, type_ctx)
    units = list(order)
    if cfg.jobs == 1:
        for members, recursive in units:
            runner.scc(members, recursive)
        return runner.report
    ranks = order.ranks(graph)
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for r in sorted(set(ranks)):
            batch = [u for u, rank in zip(units, ranks) if rank == r]
            list(pool.map(lambda u: runner.scc(*u), batch))
    return runner.report


# --------------------------------------------------------------------------
# program-level verdicts


def _verdict(issues: Sequence[Issue], incomplete: bool) -> str:
    if any(i.severity in FATAL_SEVERITIES for i in issues):
        return "FALSE"
    return "UNKNOWN" if incomplete else "TRUE"


def _caller_visible(stored_to: str | None) -> bool:
    return bool(stored_to) and ("->" in stored_to or stored_to.startswith("*") or "[" in stored_to)


def collect_issues(property_: str, graph: CallGraph, store: SummaryStore, entry: str = "main") -> list[Issue]:
    issues: list[Issue] = []
    for key in sorted(graph.functions):
        fn = graph.functions[key]
        if fn.is_external:
            continue
        if property_ == "valid-memsafety":
            rec = store.latest(key, "verify")
            if isinstance(rec, VerificationSummary):
                issues.extend(dataclasses.replace(i, function=fn.name) for i in rec.issues)
        elif property_ == "valid-memcleanup":
            rec = store.latest(key, "leak")
            if isinstance(rec, LeakSummary):
                for leak in rec.leaks:
                    if fn.name == entry or not _caller_visible(leak.stored_to):
                        issues.append(
                            Issue(
                                location=fn.name,
                                issue_kind=LEAK_ISSUE_KIND,
                                description=f"{leak.allocation}: {leak.reason}",
                                severity=leak.severity,
                                function=fn.name,
                            )
                        )
        else:
            rec = store.latest(key, "int")
            if isinstance(rec, IntSummary):
                issues.extend(dataclasses.replace(i, function=fn.name) for i in rec.issues)
    return issues


def program_graph(program: Program, lib_attrs=None) -> tuple[CallGraph, AnalysisOrder]:
    graph = build_call_graph(program.functions, program.callsites, lib_attrs if lib_attrs is not None else load_lib_attrs())
    return graph, compute_analysis_order(graph)


def _extraction_failures(program: Program) -> list[FailedFunction]:
    # a program with unreadable or unparsable files was only partly analyzed
    return [FailedFunction(f"<extraction:{path}>", "extract", reason) for path, reason in program.skipped_files]


def run_property(
    program: Program,
    property_: str,
    mode: str = "compositional",
    cfg: DriverConfig | None = None,
    *,
    provider,
    store: SummaryStore | None = None,
    program_id: str = "",
    lib_attrs=None,
    on_pass: Callable[[PassReport], None] | None = None,
) -> VerificationReport:
    cfg = cfg or DriverConfig()
    if mode == "baseline":
        return run_baseline(program, property_, cfg, provider=provider, program_id=program_id)
    if mode != "compositional":
        raise ValueError(f"unknown mode {mode!r}")
    plan = PassPlan.for_property(property_)
    start = time.perf_counter()
    counting = CountingProvider(provider)
    store = store if store is not None else SummaryStore()
    graph, order = program_graph(program, lib_attrs)
    report = VerificationReport(program_id, property_, mode, "UNKNOWN")
    report.failed_functions.extend(_extraction_failures(program))
    for pass_ in plan.passes:
        rep = run_pass(pass_, order, graph, store, counting, cfg, program.type_ctx)
        report.passes.append(rep)
        report.failed_functions.extend(rep.failed)
        report.unstable.extend(rep.unstable)
        if on_pass:
            on_pass(rep)
    report.issues = collect_issues(property_, graph, store, cfg.entry)
    report.verdict = _verdict(report.issues, bool(report.failed_functions))
    report.provider_calls = counting.count
    report.provider_errors = counting.errors
    report.wall_seconds = time.perf_counter() - start
    return report


def run_baseline(
    program: Program,
    property_: str,
    cfg: DriverConfig | None = None,
    *,
    provider,
    program_id: str = "",
) -> VerificationReport:
    cfg = cfg or DriverConfig()
    start = time.perf_counter()
    counting = CountingProvider(provider)
    report = VerificationReport(program_id, property_, "baseline", "UNKNOWN")
    report.failed_functions.extend(_extraction_failures(program))
    try:
        bundle = render_baseline_prompt(program, property_, budget=cfg.baseline_budget, templates=cfg.templates)
    except ContextOverflow as exc:
        log.info("baseline skipped: %s", exc)
        report.context_overflow = True
        report.wall_seconds = time.perf_counter() - start
        return report
    try:
        rec: Any = _ask(counting, bundle, "baseline")
    except _Failed as exc:
        report.failed_functions.append(FailedFunction(WHOLE_PROGRAM, "verify", str(exc)))
    else:
        allowed = PROPERTIES[property_][2]
        for issue in rec.issues:
            if issue.issue_kind in allowed:
                report.issues.append(issue)
            else:
                log.info("baseline: dropping %s issue outside %s", issue.issue_kind, property_)
    report.verdict = _verdict(report.issues, bool(report.failed_functions))
    report.provider_calls = counting.count
    report.provider_errors = counting.errors
    report.wall_seconds = time.perf_counter() - start
    return report
