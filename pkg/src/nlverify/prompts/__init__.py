"""Prompt rendering from the text templates shipped in ``templates/``.

Templates use ``{placeholder}`` syntax. Substitution is a single regex pass
over known names, so braces in JSON schemas and in substituted C source are
never re-expanded.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from ..callgraph import CallGraph
from ..extractor import Block, FunctionRecord, Program, TypeContext
from ..summaries import (
    INT_ISSUE_KINDS,
    LEAK_ISSUE_KIND,
    MEMORY_ISSUE_KINDS,
    AllocationSummary,
    CalleeContext,
    CalleeEntry,
    Contract,
    FreeSummary,
    InitSummary,
    SummaryStore,
    callee_context,
    serialize,
)

CACHE_MODES = ("none", "instructions", "source")
SUMMARIZER_PASSES = ("alloc", "free", "init", "memsafe", "leak", "int")
BLOCK_PASSES = ("alloc", "free", "init", "memsafe", "verify")
DEFAULT_BASELINE_BUDGET = 120_000
NONE_TEXT = "(none)"

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")
_IDENT = re.compile(r"[A-Za-z_]\w*")


class UnknownPass(ValueError):
    pass


class ContextOverflow(Exception):
    def __init__(self, size: int, budget: int):
        super().__init__(f"baseline prompt is {size} chars, budget {budget}")
        self.size = size
        self.budget = budget


@dataclass(frozen=True)
class PromptBundle:
    user: str
    system: str | None = None
    cacheable: str = "none"  # "none" | "system"
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def messages(self) -> list[dict[str, str]]:
        out = []
        if self.system is not None:
            out.append({"role": "system", "content": self.system})
        out.append({"role": "user", "content": self.user})
        return out

    def text(self) -> str:
        return self.user if self.system is None else f"{self.system}\n\n{self.user}"

    def with_suffix(self, suffix: str) -> "PromptBundle":
        return PromptBundle(f"{self.user}\n\n{suffix}", self.system, self.cacheable, self.meta)


@dataclass(frozen=True)
class AnnotatedSource:
    text: str
    # (callsite line, formal, actual expression)
    substitutions: tuple[tuple[int, str, str], ...] = ()

    def strip(self) -> str:
        return strip_annotations(self.text)


_ANNOTATION_LINE = re.compile(r"^[ \t]*/\* (?:PRE|POST)\[[^\]\n]*\]: [^\n]*\*/\n", re.M)
_BLOCK_LINE = re.compile(r"^/\* BLOCK \d+: [^\n]*\*/\n", re.M)


def strip_annotations(text: str) -> str:
    return _ANNOTATION_LINE.sub("", text)


def strip_block_comments(text: str) -> str:
    return _BLOCK_LINE.sub("", text)


# --------------------------------------------------------------------------
# template set


class Templates:
    """Built-in templates, optionally overridden file-by-file from a directory."""

    def __init__(self, override_dir: str | Path | None = None):
        self.override_dir = Path(override_dir) if override_dir else None
        if self.override_dir is not None and not self.override_dir.is_dir():
            raise FileNotFoundError(f"template directory not found: {self.override_dir}")
        self._cache: dict[str, str] = {}

    def names(self) -> list[str]:
        names = {p.name for p in resources.files(__name__).joinpath("templates").iterdir() if p.name.endswith(".txt")}
        if self.override_dir is not None:
            names |= {p.name for p in self.override_dir.glob("*.txt")}
        return sorted(names)

    def get(self, name: str) -> str:
        if name not in self._cache:
            path = self.override_dir / name if self.override_dir else None
            if path is not None and path.is_file():
                raw = path.read_text()
            else:
                raw = resources.files(__name__).joinpath("templates", name).read_text()
            self._cache[name] = raw[:-1] if raw.endswith("\n") else raw
        return self._cache[name]

    def has(self, name: str) -> bool:
        try:
            self.get(name)
        except FileNotFoundError:
            return False
        return True

    @property
    def version(self) -> str:
        h = hashlib.sha256()
        for name in self.names():
            h.update(name.encode())
            h.update(b"\0")
            h.update(self.get(name).encode())
            h.update(b"\0")
        return h.hexdigest()[:16]


@lru_cache(maxsize=1)
def builtin_templates() -> Templates:
    return Templates()


def _tpl(templates: Templates | None) -> Templates:
    return templates or builtin_templates()


def fill(template: str, values: Mapping[str, str]) -> str:
    return _PLACEHOLDER.sub(lambda m: values.get(m[1], m[0]), template)


def _section(text: str) -> str:
    return text if text.strip() else NONE_TEXT


def _named_schema(schema: str, name: str) -> str:
    return schema.replace('"<function_name>"', json.dumps(name)).replace('"<name>"', json.dumps(name))


def _dump(record: Any) -> str:
    return json.dumps(serialize(record), indent=2)


# --------------------------------------------------------------------------
# callee sections


def _callee_header(e: CalleeEntry) -> str:
    head = f"### {e.name}"
    if e.is_external:
        head += " (external)"
    if e.lib_attrs:
        head += " [" + ", ".join(sorted(e.lib_attrs)) + "]"
    return head


def _callee_summaries(ctx: CalleeContext, pass_: str) -> str:
    parts = []
    for e in ctx.entries:
        rec = e.get(pass_)
        parts.append(f"{_callee_header(e)}\n{_dump(rec) if rec is not None else '(no summary)'}")
    return "\n\n".join(parts)


_LABELS = {
    "verify": "Verification summary",
    "memsafe": "Safety contracts",
    "alloc": "Allocation summary",
    "free": "Free summary",
    "init": "Initialization summary",
    "leak": "Leak summary",
    "int": "Integer summary",
}


def _callee_multi(ctx: CalleeContext, passes: Sequence[str]) -> str:
    parts = []
    for e in ctx.entries:
        lines = [_callee_header(e)]
        for p in passes:
            rec = e.get(p)
            if rec is not None:
                lines.append(f"{_LABELS[p]}:\n{_dump(rec)}")
        if len(lines) == 1:
            lines.append("(no summary)")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def _int_callees(ctx: CalleeContext) -> str:
    parts = []
    for e in ctx.entries:
        rec = e.get("int")
        if rec is None:
            body = "(no summary)"
        else:
            facts = serialize(rec)
            facts.pop("issues", None)
            body = json.dumps(facts, indent=2)
        parts.append(f"{_callee_header(e)}\n{body}")
    return "\n\n".join(parts)


def _verify_callees(ctx: CalleeContext) -> str:
    parts = []
    for e in ctx.entries:
        lines = [_callee_header(e)]
        contracts = e.contracts()
        lines.append("Pre-conditions:\n" + (json.dumps([serialize(c) for c in contracts], indent=2) if contracts else NONE_TEXT))
        for p in ("alloc", "free", "init", "leak", "int"):
            rec = e.get(p)
            if rec is not None:
                lines.append(f"{_LABELS[p]}:\n{_dump(rec)}")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def _flat_contracts(ctx: CalleeContext) -> str:
    lines = []
    for e in ctx.entries:
        for c in e.contracts():
            line = f"- {e.name}: {c.target} {c.contract_kind}"
            if c.size_expr:
                line += f" ({c.size_expr})"
            if c.description:
                line += f": {c.description}"
            lines.append(line)
    return "\n".join(lines)


# --------------------------------------------------------------------------
# type context


def _type_defs(type_ctx: TypeContext | None, text: str | None) -> str:
    """Type definitions, struct layouts, sizes and macros mentioned in `text`.

    With `text=None` everything is rendered.
    """
    if type_ctx is None:
        return ""
    wanted = None if text is None else set(_IDENT.findall(text))

    def relevant(name: str) -> bool:
        return wanted is None or any(tok in wanted for tok in _IDENT.findall(name) if tok not in ("struct", "union", "enum"))

    lines = []
    for name, decl in type_ctx.typedefs.items():
        if relevant(name):
            lines.append(decl)
    for name, fields in type_ctx.structs.items():
        if not relevant(name):
            continue
        body = []
        for f in fields:
            off = f" /* offset {f.offset} */" if f.offset is not None else ""
            body.append(f"  {f.type} {f.name};{off}")
        lines.append(f"{name} {{\n" + "\n".join(body) + "\n};")
    for name, size in type_ctx.sizeof_values.items():
        if relevant(name):
            lines.append(f"sizeof({name}) = {size}")
    for name, value in type_ctx.macros.items():
        if wanted is None or name in wanted:
            lines.append(f"#define {name} {value}".rstrip())
    return "\n".join(lines)


def type_defs_section(type_ctx: TypeContext | None, text: str | None) -> str:
    body = _type_defs(type_ctx, text)
    return f"## Type Definitions\n{body}\n" if body else ""


# --------------------------------------------------------------------------
# summarizer prompts


def _base_values(fn: FunctionRecord, source: str | None = None) -> dict[str, str]:
    return {
        "source": fn.body if source is None else source,
        "name": fn.name,
        "signature": fn.signature,
        "file_path": fn.file_path,
    }


def render_summarizer_prompt(
    pass_: str,
    fn: FunctionRecord,
    ctx: CalleeContext,
    type_ctx: TypeContext | None = None,
    cache_mode: str = "none",
    *,
    own: Mapping[str, Any] | None = None,
    entry: str = "main",
    annotated: AnnotatedSource | None = None,
    callee_format: str = "annotate",
    templates: Templates | None = None,
) -> PromptBundle:
    """Render the per-function prompt of a summarization pass.

    `own` carries this function's alloc/free summaries for the leak pass;
    `annotated` is the PRE/POST-annotated body used by memsafe. The
    summarizer templates have no type section, so `type_ctx` is unused here.
    """
    if pass_ not in SUMMARIZER_PASSES:
        raise UnknownPass(pass_)
    if cache_mode not in CACHE_MODES:
        raise ValueError(f"unknown cache mode {cache_mode!r}")
    if fn.is_external:
        raise ValueError(f"{fn.name} is an external stub; use render_external_prompt")
    t = _tpl(templates)
    own = own or {}

    values = _base_values(fn)
    if pass_ in ("alloc", "free", "init"):
        values["callee_summaries"] = _section(_callee_summaries(ctx, pass_))
    elif pass_ == "int":
        values["callee_section"] = _section(_int_callees(ctx))
    elif pass_ == "leak":
        values["callee_section"] = _section(_callee_multi(ctx, ("alloc", "free", "leak")))
        values["alloc_section"] = _dump(own["alloc"]) if own.get("alloc") is not None else NONE_TEXT
        values["free_section"] = _dump(own["free"]) if own.get("free") is not None else NONE_TEXT
        values["task_rules"] = t.get("leak.task.txt")
        values["entry_note"] = fill(t.get("leak.entry_note.txt"), {"name": fn.name}) if fn.name == entry else ""
    else:  # memsafe
        if callee_format == "annotate":
            if annotated is not None:
                values["source"] = annotated.text
            note = t.get("memsafe.callee_note.annotated.txt") if ctx else "## Callee Safety Contracts\n" + NONE_TEXT
        elif callee_format == "flat":
            note = fill(t.get("memsafe.callee_note.flat.txt"), {"flat_list": _section(_flat_contracts(ctx))})
        else:
            raise ValueError(f"unknown callee format {callee_format!r}")
        values["callee_note"] = note
        values["alias_context"] = ""

    schema = t.get(f"{pass_}.schema.txt")
    values["instructions"] = t.get(f"{pass_}.instructions.txt")
    values["schema"] = schema if cache_mode == "instructions" else _named_schema(schema, fn.name)

    meta = {"pass": pass_, "kind": "summary", "function": fn.key, "cache_mode": cache_mode}
    if cache_mode == "none":
        return PromptBundle(fill(t.get(f"{pass_}.single.txt"), values), None, "none", meta)
    system = fill(t.get(f"{pass_}.{cache_mode}.system.txt"), values)
    user = fill(t.get(f"{pass_}.{cache_mode}.user.txt"), values)
    return PromptBundle(user, system, "system", meta)


def _sanitize_comment(text: str) -> str:
    return " ".join(text.split()).replace("*/", "* /")


def render_block_prompt(
    pass_: str,
    fn: FunctionRecord,
    block: Block,
    prior_block_summaries: Sequence[str],
    *,
    own_contracts: Sequence[Contract] = (),
    templates: Templates | None = None,
) -> PromptBundle:
    if pass_ not in BLOCK_PASSES:
        raise UnknownPass(pass_)
    t = _tpl(templates)
    prior = "".join(f"/* BLOCK {i}: {_sanitize_comment(s)} */\n" for i, s in enumerate(prior_block_summaries))
    values = _base_values(fn)
    values["block_source"] = prior + block.source
    values["own_contracts"] = _contracts_json(own_contracts)
    meta = {"pass": pass_, "kind": "block", "function": fn.key, "block": block.index}
    return PromptBundle(fill(t.get(f"{pass_}.block.txt"), values), None, "none", meta)


_PASS_TITLES = {
    "alloc": "memory allocation summary",
    "free": "deallocation (free) summary",
    "init": "initialization summary",
    "memsafe": "safety pre-condition contracts",
    "verify": "memory-safety verification",
}


def render_merge_prompt(
    pass_: str,
    fn: FunctionRecord,
    block_summaries: Sequence[str],
    ctx: CalleeContext,
    *,
    own_contracts: Sequence[Contract] = (),
    templates: Templates | None = None,
) -> PromptBundle:
    """Combine per-block answers into one whole-function summary."""
    if pass_ not in BLOCK_PASSES:
        raise UnknownPass(pass_)
    t = _tpl(templates)
    values = _base_values(fn)
    values["pass_title"] = _PASS_TITLES[pass_]
    values["block_summaries"] = _section("\n\n".join(f"### Block {i}\n{s}" for i, s in enumerate(block_summaries)))
    if pass_ == "verify":
        values["callee_summaries"] = _section(_verify_callees(ctx))
        values["own_contracts_section"] = f"\n## Pre-conditions (assume these hold)\n{_contracts_json(own_contracts)}\n"
    elif pass_ == "memsafe":
        values["callee_summaries"] = _section(_flat_contracts(ctx))
        values["own_contracts_section"] = ""
    else:
        values["callee_summaries"] = _section(_callee_summaries(ctx, pass_))
        values["own_contracts_section"] = ""
    values["schema"] = _named_schema(t.get(f"{pass_}.schema.txt"), fn.name)
    meta = {"pass": pass_, "kind": "merge", "function": fn.key}
    return PromptBundle(fill(t.get("merge.txt"), values), None, "none", meta)


def render_external_prompt(name: str, *, templates: Templates | None = None) -> PromptBundle:
    if not name or not _IDENT.fullmatch(name):
        raise ValueError(f"not an identifier: {name!r}")
    t = _tpl(templates)
    values = {
        "name": name,
        "instructions": t.get("external.instructions.txt"),
        "schema": _named_schema(t.get("external.schema.txt"), name),
    }
    meta = {"pass": "external", "kind": "external", "function": name}
    return PromptBundle(fill(t.get("external.txt"), values), None, "none", meta)


# --------------------------------------------------------------------------
# verifier


def _contracts_json(contracts: Sequence[Contract]) -> str:
    if not contracts:
        return NONE_TEXT
    return json.dumps([serialize(c) for c in contracts], indent=2)


def render_verifier_prompt(
    fn: FunctionRecord,
    own_contracts: Sequence[Contract],
    annotated: AnnotatedSource,
    ctx: CalleeContext,
    type_ctx: TypeContext | None = None,
    *,
    own_alloc: AllocationSummary | None = None,
    own_free: FreeSummary | None = None,
    templates: Templates | None = None,
) -> PromptBundle:
    t = _tpl(templates)
    values = _base_values(fn, annotated.text)
    values["type_defs_section"] = type_defs_section(type_ctx, fn.body)
    values["own_contracts"] = _contracts_json(own_contracts)
    own_parts = []
    if own_alloc is not None:
        own_parts.append(f"Allocation summary:\n{_dump(own_alloc)}")
    if own_free is not None:
        own_parts.append(f"Free summary:\n{_dump(own_free)}")
    values["own_alloc_free_section"] = (
        "## This Function's Allocation and Free Summaries\n" + "\n".join(own_parts) + "\n" if own_parts else ""
    )
    values["callee_section"] = _section(_verify_callees(ctx))
    values["alias_context"] = ""
    values["instructions"] = t.get("verify.instructions.txt")
    values["schema"] = _named_schema(t.get("verify.schema.txt"), fn.name)
    meta = {"pass": "verify", "kind": "summary", "function": fn.key}
    return PromptBundle(fill(t.get("verify.single.txt"), values), None, "none", meta)


# --------------------------------------------------------------------------
# callsite annotation


@lru_cache(maxsize=1)
def _libc_params() -> dict[str, tuple[str, ...]]:
    raw = json.loads(resources.files("nlverify").joinpath("data/libc_params.json").read_text())
    return {k: tuple(v) for k, v in raw.items()}


def _formals(e: CalleeEntry) -> tuple[str, ...]:
    if e.params:
        return e.params
    if e.name in _libc_params():
        return _libc_params()[e.name]
    alloc = e.get("alloc")
    if isinstance(alloc, AllocationSummary) and alloc.parameters:
        return tuple(alloc.parameters)
    return ()


_SIMPLE_EXPR = re.compile(r"[\w.\[\]]+(?:->[\w.\[\]]+)*")


def _rewrite(expr: str, mapping: Mapping[str, str]) -> tuple[str, list[tuple[str, str]]]:
    """Replace whole-token formals in `expr`; field names after . or -> stay."""
    used: list[tuple[str, str]] = []

    def sub(m: re.Match) -> str:
        tok = m[0]
        before = expr[: m.start()].rstrip()
        if tok not in mapping or before.endswith(".") or before.endswith("->"):
            return tok
        actual = mapping[tok]
        used.append((tok, actual))
        if m[0] == expr or _SIMPLE_EXPR.fullmatch(actual):
            return actual
        return f"({actual})"

    out = _IDENT.sub(sub, expr)
    # fold the address-of an actual back into the formal's dereference
    out = re.sub(r"\*\(&([\w.\[\]]+)\)", r"\1", out)
    out = re.sub(r"\(&([\w.\[\]]+)\)->", r"\1.", out)
    return out, used


_PHRASES = {
    "disallow_null": "must not be NULL",
    "allow_null": "may be NULL",
    "not_freed": "must not be freed",
    "initialized": "must be initialized",
    "non_negative": "must be non-negative",
}


def _target_text(expr: str, mapping: Mapping[str, str], subs: list) -> str:
    new, used = _rewrite(expr, mapping)
    if not used:
        return f"(formal) {expr}"
    subs.extend(used)
    return f"{expr} -> {new}"


def _pre_lines(e: CalleeEntry, mapping: Mapping[str, str], subs: list) -> list[str]:
    out = []
    for c in e.contracts():
        target = _target_text(c.target, mapping, subs)
        if c.contract_kind == "buffer_size":
            size = _rewrite(c.size_expr or "?", mapping)[0]
            unit = "elements" if c.relationship == "element_count" else "bytes"
            phrase = f"must point to at least {size} {unit}"
        else:
            phrase = _PHRASES[c.contract_kind]
        line = f"{target} {phrase}"
        if c.condition:
            line += f" (when {c.condition})"
        out.append(line)
    return out


def _post_lines(e: CalleeEntry, mapping: Mapping[str, str], subs: list) -> list[str]:
    out = []
    alloc = e.get("alloc")
    if isinstance(alloc, AllocationSummary):
        for a in alloc.allocations:
            size = f" of {_rewrite(a.size_expr, mapping)[0]} bytes" if a.size_expr else ""
            null = ", may be NULL" if a.may_be_null else ""
            if a.returned:
                out.append(f"returns {a.type} allocation{size}{null}")
            if a.stored_to:
                out.append(f"stores {a.type} allocation{size} in {_target_text(a.stored_to, mapping, subs)}")
    free = e.get("free")
    if isinstance(free, FreeSummary):
        for verb, entries in (("frees", free.frees), ("releases", free.resource_releases)):
            for f in entries:
                if f.target_kind in ("local", "return_value"):
                    continue
                line = f"{verb} {_target_text(f.target, mapping, subs)}"
                if f.conditional:
                    line += f" when {f.condition}" if f.condition else " on some paths"
                out.append(line)
    init = e.get("init")
    noreturn = "noreturn" in e.lib_attrs
    if isinstance(init, InitSummary):
        for i in init.inits:
            if i.target_kind == "return_value":
                out.append("initializes the return value")
            else:
                out.append(f"initializes {_target_text(i.target, mapping, subs)}")
        if init.noreturn and init.noreturn_condition:
            out.append(f"does not return when {init.noreturn_condition}")
        elif init.noreturn:
            noreturn = True
    if noreturn:
        out.append("does not return")
    return out


def annotate_callsites(
    fn: FunctionRecord, graph: CallGraph, store: SummaryStore, pass_: str = "verify"
) -> AnnotatedSource:
    """Insert callee PRE/POST comment lines around each direct callsite."""
    sites = [s for s in graph.sites_of(fn.key) if not s.is_indirect]
    if not sites:
        return AnnotatedSource(fn.body)
    ctx = callee_context(store, fn, graph, pass_)
    lines = fn.body.split("\n")
    above: dict[int, list[str]] = {}
    below: dict[int, list[str]] = {}
    subs: list[tuple[int, str, str]] = []
    for site in sites:
        key = graph.callee_key(fn.key, site)
        e = ctx.entry(key) if key else None
        if e is None:
            continue
        mapping = dict(zip(_formals(e), site.arg_exprs))
        used: list[tuple[str, str]] = []
        pre = _pre_lines(e, mapping, used)
        post = _post_lines(e, mapping, used)
        subs.extend((site.line, f, a) for f, a in dict.fromkeys(used))
        row = min(site.body_line, len(lines) - 1)
        end = min(max(site.body_end_line, row), len(lines) - 1)
        indent = re.match(r"[ \t]*", lines[row])[0]
        above.setdefault(row, []).extend(f"{indent}/* PRE[{e.name}]: {_sanitize_comment(p)} */" for p in pre)
        indent = re.match(r"[ \t]*", lines[end])[0]
        below.setdefault(end, []).extend(f"{indent}/* POST[{e.name}]: {_sanitize_comment(p)} */" for p in post)

    out = []
    for i, line in enumerate(lines):
        out.extend(above.get(i, ()))
        out.append(line)
        out.extend(below.get(i, ()))
    return AnnotatedSource("\n".join(out), tuple(subs))


# --------------------------------------------------------------------------
# whole-program baseline

PROPERTIES: dict[str, tuple[str, str, tuple[str, ...]]] = {
    "valid-memsafety": (
        "memory safety",
        "every memory access is valid: no NULL dereference, no out-of-bounds access, "
        "no use-after-free, no double free, no invalid free, no read of uninitialized memory",
        MEMORY_ISSUE_KINDS,
    ),
    "valid-memcleanup": (
        "memory cleanup",
        "all heap memory allocated by the program is freed before the program exits",
        (LEAK_ISSUE_KIND,),
    ),
    "no-overflow": (
        "absence of integer undefined behaviour",
        "no signed integer overflow, division by zero or undefined shift occurs",
        INT_ISSUE_KINDS,
    ),
}


def _file_order(functions: Iterable[FunctionRecord]) -> list[tuple[str, list[FunctionRecord]]]:
    groups: dict[str, list[FunctionRecord]] = {}
    for fn in functions:
        if not fn.is_external:
            groups.setdefault(fn.file_path, []).append(fn)
    return [(path, sorted(fns, key=lambda f: f.line_span)) for path, fns in groups.items()]


def render_baseline_prompt(
    program: Program,
    property_: str,
    *,
    budget: int = DEFAULT_BASELINE_BUDGET,
    templates: Templates | None = None,
) -> PromptBundle:
    if property_ not in PROPERTIES:
        raise ValueError(f"unknown property {property_!r}")
    t = _tpl(templates)
    goal, text, kinds = PROPERTIES[property_]
    tc = program.type_ctx
    sources = "\n\n".join(
        f"// file: {path}\n```c\n" + "\n\n".join(f.body for f in fns) + "\n```"
        for path, fns in _file_order(program.functions)
    )
    type_only = TypeContext(tc.typedefs, tc.structs, tc.sizeof_values)
    values = {
        "property_goal": goal,
        "property": property_,
        "property_text": text,
        "macros": _section("\n".join(f"#define {k} {v}".rstrip() for k, v in tc.macros.items())),
        "type_defs": _section(_type_defs(type_only, None)),
        "globals": _section("\n".join(tc.globals.values())),
        "sources": _section(sources),
        "issue_kinds": ", ".join(kinds),
        "schema": fill(t.get("baseline.schema.txt"), {"issue_kinds_pipe": "|".join(kinds)}),
    }
    rendered = fill(t.get("baseline.txt"), values)
    if len(rendered) > budget:
        raise ContextOverflow(len(rendered), budget)
    meta = {"pass": "baseline", "kind": "baseline", "property": property_}
    return PromptBundle(rendered, None, "none", meta)
