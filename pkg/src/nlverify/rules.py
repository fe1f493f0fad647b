"""Shallow lexical oracle that answers rendered prompts without a model.

It reads the prompt the way a model would: it recognises the prompt kind
from its opening line, pulls the C source out of the fenced block and
applies a handful of regex rules. Control flow is ignored. The point is
to exercise the pipeline end to end (schemas, propagation through
PRE/POST comments, caching), not to analyse C well.
"""

from __future__ import annotations

import json
import re
from typing import Any

IDENT = r"[A-Za-z_]\w*"
ALLOCATORS = ("malloc", "calloc", "realloc", "strdup")

_FENCED_C = re.compile(r"```c\n(.*?)\n```", re.S)
_ANNOT = re.compile(r"^\s*/\* (PRE|POST)\[(\w+)\]: (.*) \*/\s*$")
_PRE_BODY = re.compile(
    r"^(?:\(formal\) )?(.+?)(?: -> (.+?))? "
    r"(must not be NULL|may be NULL|must not be freed|must be initialized|must be non-negative"
    r"|must point to at least (.+) (?:bytes|elements))(?: \(when .*\))?$"
)
_PHRASE_KIND = {
    "must not be NULL": "disallow_null",
    "must not be freed": "not_freed",
    "must be initialized": "initialized",
    "must be non-negative": "non_negative",
}


# --------------------------------------------------------------------------
# reading the prompt


def prompt_kind(text: str) -> tuple[str, str]:
    """(kind, pass) of a rendered prompt."""
    head = text[:400]
    if "You are analyzing a code block from a large" in head:
        for marker, pass_ in (
            ("heap memory allocations", "alloc"),
            ("free/deallocation operations", "free"),
            ("initialization operations", "init"),
            ("safety contracts (pre-conditions) for this code block", "memsafe"),
        ):
            if marker in text:
                return "block", pass_
    if "verifying memory safety of a code block" in head:
        return "block", "verify"
    if "combining block-level summaries" in head:
        title = re.search(r"^Summary kind: (.*)$", text, re.M)
        # "deallocation" contains "allocation", so free is tested first
        for word, pass_ in (("free", "free"), ("allocation", "alloc"), ("initialization", "init"),
                            ("contracts", "memsafe"), ("verification", "verify")):
            if title and word in title[1]:
                return "merge", pass_
    if "Given the name of a" in head:
        return "external", "external"
    if "verifying a whole C program" in head:
        return "baseline", "baseline"
    for marker, pass_ in (
        ("generate memory allocation summaries", "alloc"),
        ("generate deallocation (free) summaries", "free"),
        ("generate initialization summaries", "init"),
        ("generate safety pre-condition contracts", "memsafe"),
        ("value-range analysis on a C/C++ function", "int"),
        ("for memory leaks by comparing", "leak"),
        ("verifying memory safety of a C/C++ function", "verify"),
    ):
        if marker in head:
            return "summary", pass_
    return "unknown", "unknown"


def _line_value(text: str, label: str) -> str:
    m = re.search(rf"^{re.escape(label)}: (.*)$", text, re.M)
    return m[1].strip() if m else ""


def param_names(signature: str) -> list[str]:
    lo, hi = signature.find("("), signature.rfind(")")
    if lo < 0 or hi < lo:
        return []
    inner = signature[lo + 1 : hi]
    parts, depth, cur = [], 0, ""
    for ch in inner:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += ch in "(["
        depth -= ch in ")]"
        cur += ch
    parts.append(cur)
    names = []
    for p in parts:
        p = p.strip()
        if not p or p in ("void", "..."):
            continue
        fp = re.search(rf"\(\s*\*\s*({IDENT})\s*\)", p)
        if fp:
            names.append(fp[1])
            continue
        toks = re.findall(IDENT, re.sub(r"\[.*?\]", "", p))
        if toks:
            names.append(toks[-1])
    return names


def _scrub(line: str) -> str:
    """Drop comments and string/char literal contents from one line of C."""
    line = re.sub(r'"(?:\\.|[^"\\])*"', '""', line)
    line = re.sub(r"'(?:\\.|[^'\\])*'", "''", line)
    line = re.sub(r"/\*.*?\*/", " ", line)
    return re.sub(r"//.*$", "", line)


def _call_args(text: str, open_paren: int) -> tuple[list[str], int]:
    """Top-level argument texts of the call whose '(' is at `open_paren`."""
    depth, cur, args = 0, "", []
    for i in range(open_paren, len(text)):
        ch = text[i]
        if ch == "(":
            depth += 1
            if depth == 1:
                continue
        elif ch == ")":
            depth -= 1
            if depth == 0:
                if cur.strip() or args:
                    args.append(cur.strip())
                return args, i
        elif ch == "," and depth == 1:
            args.append(cur.strip())
            cur = ""
            continue
        cur += ch
    return args, len(text)


def _calls(line: str) -> list[tuple[str, list[str]]]:
    out = []
    for m in re.finditer(rf"\b({IDENT})\s*\(", line):
        if m[1] in ("if", "while", "for", "switch", "return", "sizeof"):
            continue
        args, _ = _call_args(line, m.end() - 1)
        out.append((m[1], args))
    return out


def _callee_records(text: str) -> dict[str, dict[str, Any]]:
    """Parse the '### name' callee sections into {name: {label: json}}."""
    out: dict[str, dict[str, Any]] = {}
    dec = json.JSONDecoder()
    for m in re.finditer(r"^### (\w+)[^\n]*\n(.*?)(?=^### |^## |\Z)", text, re.M | re.S):
        name, body = m[1], m[2]
        recs: dict[str, Any] = {}
        label = ""
        i = 0
        while i < len(body):
            nl = body.find("\n", i)
            line = body[i : nl if nl >= 0 else len(body)]
            stripped = line.strip()
            if stripped.endswith(":") and not stripped.startswith(("{", "[", '"')):
                label = stripped[:-1]
            elif stripped.startswith(("{", "[")):
                try:
                    obj, end = dec.raw_decode(body, i + line.index(stripped[0]))
                except json.JSONDecodeError:
                    pass
                else:
                    recs[label] = obj
                    i = end
                    continue
            if nl < 0:
                break
            i = nl + 1
        out[name] = recs
    return out


def _section_json(text: str, header: str) -> Any:
    m = re.search(rf"^{re.escape(header)}\n", text, re.M)
    if not m:
        return None
    rest = text[m.end() :].lstrip()
    if not rest.startswith(("{", "[")):
        return None
    try:
        return json.JSONDecoder().raw_decode(rest)[0]
    except json.JSONDecodeError:
        return None


def _body_lines(source: str) -> list[str]:
    """Source lines after the opening brace of the function."""
    lines = source.split("\n")
    for i, line in enumerate(lines):
        if "{" in _scrub(line):
            head, _, tail = line.partition("{")
            return [tail] + lines[i + 1 :]
    return lines


def _null_checked(code: str, var: str) -> bool:
    v = re.escape(var)
    return bool(
        re.search(rf"!\s*{v}\b(?!\s*->)|\b{v}\s*[!=]=\s*(?:NULL|0)\b|\b(?:NULL|0)\s*[!=]=\s*{v}\b|\bif\s*\(\s*{v}\s*\)", code)
    )


def _derefs(line: str, var: str) -> bool:
    v = re.escape(var)
    # a `*` after an operand is multiplication, except after a keyword
    return bool(re.search(rf"(?:^|[^\w)\]\s]|\b(?:return|case|sizeof))\s*\*\s*{v}\b|\b{v}\s*(?:->|\[)", line))


def _assigns(line: str, var: str) -> bool:
    return bool(re.search(rf"(?<![\w.>*]){re.escape(var)}\s*=(?!=)", line))


# --------------------------------------------------------------------------
# per-pass rules


def _allocations(code_lines: list[str], params: list[str], callees: dict) -> list[dict]:
    allocs = []
    code = "\n".join(code_lines)
    returned_vars = set(re.findall(rf"\breturn\s+\(?\s*({IDENT})\s*\)?\s*;", code))
    returning_callees = {
        name for name, recs in callees.items()
        for r in recs.values()
        if isinstance(r, dict) and any(a.get("returned") for a in r.get("allocations", []) if isinstance(a, dict))
    }
    for line in code_lines:
        for m in re.finditer(rf"(?:({IDENT}(?:(?:->|\.){IDENT})*)\s*=\s*|\breturn\s+)(?:\([^()]*\)\s*)?({IDENT})\s*\(", line):
            lhs, fn = m[1], m[2]
            if fn not in ALLOCATORS and fn not in returning_callees:
                continue
            args, _ = _call_args(line, m.end() - 1)
            size = None
            if fn == "malloc" and args:
                size = args[0]
            elif fn == "calloc" and len(args) == 2:
                size = f"{args[0]} * {args[1]}"
            elif fn == "realloc" and len(args) == 2:
                size = args[1]
            elif fn == "strdup" and args:
                size = f"strlen({args[0]}) + 1"
            if lhs is not None and lhs not in returned_vars:
                lhs = _escape_target(code, lhs)
            allocs.append({
                "type": "heap",
                "source": fn,
                "size_expr": size,
                "size_params": [p for p in params if size and re.search(rf"\b{p}\b", size)],
                "returned": lhs is None or lhs in returned_vars,
                "stored_to": lhs,
                "may_be_null": True,
            })
    return allocs


def _escape_target(code: str, var: str) -> str:
    """A caller-visible lvalue that a local allocation is copied into, if any."""
    if not re.fullmatch(IDENT, var):
        return var
    m = re.search(rf"(\*\s*{IDENT}|{IDENT}(?:->{IDENT})+|{IDENT}\[[^\]]*\])\s*=\s*{var}\s*;", code)
    return re.sub(r"\s+", "", m[1]) if m else var


def _freeing_callees(callees: dict) -> set[str]:
    out = set()
    for name, recs in callees.items():
        for r in recs.values():
            frees = r.get("frees") if isinstance(r, dict) else None
            if frees and any(isinstance(f, dict) and f.get("target_kind") in ("parameter", "field") for f in frees):
                out.add(name)
    return out


def _target_kind(target: str, params: list[str]) -> str:
    if "->" in target or "." in target:
        return "field"
    return "parameter" if target in params else "local"


def _frees(code_lines: list[str], params: list[str], callees: dict) -> list[dict]:
    via = _freeing_callees(callees)
    out, seen = [], set()
    for i, line in enumerate(code_lines):
        later = "\n".join(code_lines[i + 1:])
        for name, args in _calls(line):
            if name == "free" and args:
                targets = [args[0]]
            elif name in via:
                targets = [a for a in args if re.fullmatch(rf"{IDENT}(?:(?:->|\.){IDENT})*", a)]
            else:
                continue
            for t in targets:
                if t in seen:
                    continue
                seen.add(t)
                entry = {
                    "target": t,
                    "target_kind": _target_kind(t, params),
                    "deallocator": name,
                    "conditional": False,
                    "nulled_after": bool(re.search(rf"(?<![\w*>.]){re.escape(t)}\s*=\s*(?:NULL|0)\s*;", later)),
                }
                if name != "free":
                    entry["description"] = f"freed by {name}"
                out.append(entry)
    return out


def _inits(code_lines: list[str], params: list[str], callees: dict) -> tuple[list[dict], bool]:
    out, seen = [], set()
    for line in code_lines:
        for p in params:
            for target, kind in ((rf"\*\s*{p}\s*=(?!=)", f"*{p}"), (rf"\b{p}\s*->\s*({IDENT})\s*=(?!=)", None)):
                for m in re.finditer(target, line):
                    t = kind or f"{p}->{m[1]}"
                    if t not in seen:
                        seen.add(t)
                        out.append({"target": t, "target_kind": "parameter" if kind else "field", "initializer": "assignment"})
        for name, args in _calls(line):
            if name == "memset" and args and args[0] in params and f"*{args[0]}" not in seen:
                seen.add(f"*{args[0]}")
                out.append({"target": f"*{args[0]}", "target_kind": "parameter", "initializer": "memset",
                            "byte_count": args[2] if len(args) > 2 else None})
    stoppers = {"exit", "abort", "_exit"} | {
        n for n, recs in callees.items() if any(isinstance(r, dict) and r.get("noreturn") for r in recs.values())
    }
    noreturn = False
    depth = 0
    prev = ""
    for line in code_lines:
        if depth == 0 and not re.match(r"\s*(?:if|else|for|while|do|case|default)\b", prev):
            if any(name in stoppers for name, _ in _calls(line)) and not re.match(r"\s*(?:if|else)\b", line):
                noreturn = True
        depth += line.count("{") - line.count("}")
        if line.strip():
            prev = line
    return out, noreturn


def _memsafe_contracts(lines: list[str], params: list[str]) -> list[dict]:
    code_lines = [_scrub(l) for l in lines if not _ANNOT.match(l)]
    code = "\n".join(code_lines)
    out, seen = [], set()

    def add(target, kind, desc, **extra):
        if (target, kind) in seen:
            return
        seen.add((target, kind))
        out.append({"target": target, "contract_kind": kind, "description": desc, **extra})

    for line in lines:
        ann = _ANNOT.match(line)
        if ann:
            if ann[1] != "PRE":
                continue
            m = _PRE_BODY.match(ann[3])
            if not m:
                continue
            actual = m[2] or m[1]
            kind = "buffer_size" if m[3].startswith("must point") else _PHRASE_KIND.get(m[3])
            if kind is None or actual not in params:
                continue
            if kind == "disallow_null" and _null_checked(code, actual):
                continue
            if kind == "buffer_size":
                unit = "element_count" if m[3].endswith("elements") else "byte_count"
                add(actual, kind, f"required by {ann[2]}", size_expr=m[4], relationship=unit)
            else:
                add(actual, kind, f"required by {ann[2]}")
            continue
        code_line = _scrub(line)
        for p in params:
            if _derefs(code_line, p) and not _null_checked(code, p):
                add(p, "disallow_null", f"{p} is dereferenced")
        for name, args in _calls(code_line):
            if name == "free" and args and args[0] in params:
                add(args[0], "not_freed", f"{args[0]} is freed")
    return out


def _scan_uaf(lines: list[str], extra_frees=None) -> list[dict]:
    """Sequential freed-set walk reporting double_free and use_after_free.

    `extra_frees(name, args)` names the arguments a call frees besides
    free() itself; the whole-program scan uses it for defined functions.
    """
    freed: set[str] = set()
    issues, seen = [], set()
    row = 0

    def report(kind, var, callee=None):
        if (kind, var) in seen:
            return
        seen.add((kind, var))
        what = "freed twice" if kind == "double_free" else "used after it was freed"
        issue = {"location": f"line {row}", "issue_kind": kind, "description": f"{var} is {what}", "severity": "high"}
        if callee:
            issue.update(callee=callee, contract_kind="not_freed")
        issues.append(issue)

    for line in lines:
        ann = _ANNOT.match(line)
        if ann:
            tag, callee, body = ann.groups()
            if tag == "PRE":
                m = _PRE_BODY.match(body)
                if m and m[3] == "must not be freed" and (m[2] or m[1]) in freed:
                    report("double_free", m[2] or m[1], callee)
            elif body == "does not return":
                break
            else:
                m = re.match(r"frees (?:\(formal\) )?.+? -> (.+?)(?: when .*| on some paths)?$", body)
                if m:
                    freed.add(m[1])
            continue
        row += 1
        code = _scrub(line)
        for var in sorted(freed):
            if _derefs(code, var):
                report("use_after_free", var)
        newly = []
        for name, args in _calls(code):
            targets = [args[0]] if name == "free" and args else []
            if extra_frees is not None:
                targets += extra_frees(name, args)
            for t in targets:
                if t in freed:
                    report("double_free", t)
                newly.append(t)
        for var in list(freed):
            if _assigns(code, var):
                freed.discard(var)
        freed.update(newly)
        if any(name in ("exit", "abort") for name, _ in _calls(code)) and re.match(r"\s*(?:exit|abort)\s*\(", code):
            break
    return issues


def _int_rules(code_lines: list[str], params: list[str]) -> tuple[list[dict], list[dict]]:
    constraints, issues, seen = [], [], set()
    for row, line in enumerate(code_lines, 1):
        for m in re.finditer(rf"[^/*]([/%])\s*({IDENT}|\d+)\b", line):
            operand = m[2]
            if operand in params and operand not in seen:
                seen.add(operand)
                constraints.append({"target": operand, "range": "!= 0", "description": f"divisor of {m[1]}"})
            elif operand == "0":
                issues.append({"location": f"line {row}", "issue_kind": "division_by_zero",
                               "description": "division by constant zero", "severity": "high"})
        for m in re.finditer(r"<<\s*(\d+)\b", line):
            if int(m[1]) >= 32:
                issues.append({"location": f"line {row}", "issue_kind": "shift_ub",
                               "description": f"shift by {m[1]} bits", "severity": "high"})
        if re.search(r"\bINT_MAX\s*\+\s*[1-9]|\bINT_MIN\s*-\s*[1-9]", line):
            issues.append({"location": f"line {row}", "issue_kind": "integer_overflow",
                           "description": "arithmetic past INT_MAX/INT_MIN", "severity": "high"})
    return constraints, issues


def _external(name: str) -> dict:
    out: dict[str, Any] = {"allocation": None, "free": None, "init": None, "memsafe": None}
    desc = f"{name} from the C library"
    if name in ("malloc", "calloc", "realloc", "strdup", "strndup", "aligned_alloc"):
        size = {"malloc": "size", "calloc": "nmemb * size", "realloc": "size", "strdup": "strlen(s) + 1",
                "strndup": "n + 1", "aligned_alloc": "size"}[name]
        out["allocation"] = {
            "function": name, "description": f"returns a new heap block of {size} bytes",
            "allocations": [{"type": "heap", "source": name, "size_expr": size, "size_params": [],
                             "returned": True, "stored_to": None, "may_be_null": True}],
        }
    if name in ("free", "realloc"):
        out["free"] = {"function": name, "description": "releases ptr",
                       "frees": [{"target": "ptr", "target_kind": "parameter", "deallocator": name,
                                  "conditional": name == "realloc", "nulled_after": False}]}
        out["memsafe"] = {"function": name, "description": "ptr must not already be freed",
                          "contracts": [{"target": "ptr", "contract_kind": "not_freed", "description": "ptr is released"}]}
    if name in ("fclose", "close"):
        arg = "stream" if name == "fclose" else "fd"
        out["free"] = {"function": name, "description": f"releases {arg}", "frees": [],
                       "resource_releases": [{"target": arg, "target_kind": "parameter", "deallocator": name,
                                              "conditional": False, "nulled_after": False}]}
    if name in ("exit", "abort", "_exit", "_Exit", "__assert_fail", "reach_error"):
        out["init"] = {"function": name, "description": "does not return", "inits": [], "noreturn": True}
    if name in ("memcpy", "memmove", "memset", "strcpy", "strncpy", "strlen", "strcmp"):
        targets = {"memcpy": ["dest", "src"], "memmove": ["dest", "src"], "memset": ["s"], "strcpy": ["dest", "src"],
                   "strncpy": ["dest", "src"], "strlen": ["s"], "strcmp": ["s1", "s2"]}[name]
        contracts = [{"target": t, "contract_kind": "disallow_null", "description": f"{t} is dereferenced"} for t in targets]
        if name in ("memcpy", "memmove", "memset"):
            contracts.append({"target": targets[0], "contract_kind": "buffer_size", "description": "written for n bytes",
                              "size_expr": "n", "relationship": "byte_count"})
        out["memsafe"] = {"function": name, "description": desc, "contracts": contracts}
    return out


# --------------------------------------------------------------------------
# whole-program baseline


def _split_functions(source: str) -> list[tuple[str, list[str], list[str]]]:
    """(name, params, body lines) for each definition in concatenated source."""
    out = []
    header = re.compile(rf"^[A-Za-z_][\w \t\*]*?\b({IDENT})\s*\(([^;{{]*?)\)\s*\{{", re.M | re.S)
    pos = 0
    while True:
        m = header.search(source, pos)
        if not m:
            break
        depth, i = 0, m.end() - 1
        while i < len(source):
            if source[i] == "{":
                depth += 1
            elif source[i] == "}":
                depth -= 1
                if depth == 0:
                    break
            i += 1
        text = source[m.start() : i + 1]
        out.append((m[1], param_names(f"({m[2]})"), _body_lines(text)))
        pos = i + 1
    return out


def _baseline(text: str) -> dict:
    m = re.search(r"^## Property\n([\w-]+):", text, re.M)
    prop = m[1] if m else "valid-memsafety"
    source = "\n".join(_FENCED_C.findall(text))
    funcs = _split_functions(source)
    params = {n: p for n, p, _ in funcs}

    frees_param: dict[str, set[int]] = {n: set() for n, _, _ in funcs}
    changed = True
    while changed:
        changed = False
        for name, ps, body in funcs:
            for line in body:
                for callee, args in _calls(_scrub(line)):
                    idxs = {0} if callee == "free" else frees_param.get(callee, set())
                    for i in idxs:
                        if i < len(args) and args[i] in ps:
                            j = ps.index(args[i])
                            if j not in frees_param[name]:
                                frees_param[name].add(j)
                                changed = True

    def extra(callee, args):
        return [args[i] for i in sorted(frees_param.get(callee, ())) if i < len(args)] if callee in params else []

    issues = []
    if prop == "valid-memsafety":
        for name, _, body in funcs:
            for issue in _scan_uaf(body, extra):
                issue["location"] = f"{name}, {issue['location']}"
                issues.append(issue)
    elif prop == "valid-memcleanup":
        for name, ps, body in funcs:
            if name != "main":
                continue
            code_lines = [_scrub(l) for l in body]
            freed = {t for line in code_lines for c, a in _calls(line)
                     for t in ([a[0]] if c == "free" and a else extra(c, a))}
            for a in _allocations(code_lines, ps, {}):
                if a["stored_to"] not in freed:
                    issues.append({"location": "main", "issue_kind": "memory_leak",
                                   "description": f"{a['source']} result {a['stored_to']} is never freed", "severity": "high"})
    else:
        for name, ps, body in funcs:
            _, found = _int_rules([_scrub(l) for l in body], ps)
            for issue in found:
                issue["location"] = f"{name}, {issue['location']}"
                issues.append(issue)
    return {"function": "<program>", "description": f"{len(issues)} issue(s) found by lexical scan", "issues": issues}


# --------------------------------------------------------------------------
# dispatch


def _pass_facts(pass_: str, lines: list[str], params: list[str], callees: dict) -> dict:
    code_lines = [_scrub(l) for l in lines if not _ANNOT.match(l)]
    if pass_ == "alloc":
        return {"allocations": _allocations(code_lines, params, callees)}
    if pass_ == "free":
        return {"frees": _frees(code_lines, params, callees)}
    if pass_ == "init":
        inits, noreturn = _inits(code_lines, params, callees)
        return {"inits": inits, "noreturn": noreturn}
    if pass_ == "memsafe":
        return {"contracts": _memsafe_contracts(lines, params)}
    if pass_ == "verify":
        return {"issues": _scan_uaf(lines)}
    raise ValueError(pass_)


_LIST_FIELD = {"alloc": "allocations", "free": "frees", "init": "inits", "memsafe": "contracts", "verify": "issues"}


def _describe(pass_: str, facts: dict) -> str:
    items = facts[_LIST_FIELD[pass_]]
    if not items:
        return {"alloc": "no allocations", "free": "frees nothing", "init": "initializes nothing",
                "memsafe": "no requirements", "verify": "no issues"}[pass_]
    if pass_ == "alloc":
        return "; ".join(f"allocates {a['stored_to'] or 'return value'} via {a['source']}" for a in items)
    if pass_ == "free":
        return "; ".join(f"frees {f['target']}" for f in items)
    if pass_ == "init":
        return "; ".join(f"initializes {i['target']}" for i in items)
    if pass_ == "memsafe":
        return "; ".join(f"{c['target']} {c['contract_kind']}" for c in items)
    return "; ".join(f"{i['issue_kind']} at {i['location']}" for i in items)


def respond(text: str) -> dict:
    kind, pass_ = prompt_kind(text)
    if kind == "external":
        return _external(_line_value(text, "Function name"))
    if kind == "baseline":
        return _baseline(text)

    name = _line_value(text, "Function")
    params = param_names(_line_value(text, "Signature"))
    callees = _callee_records(text)
    fenced = _FENCED_C.search(text)
    source = fenced[1] if fenced else ""

    if kind == "block":
        source = re.sub(r"^/\* BLOCK \d+: .*\*/\n", "", source, flags=re.M)
        facts = _pass_facts(pass_, source.split("\n"), params, callees)
        return {"suggested_name": f"{name}_block", "suggested_signature": f"void {name}_block(void)",
                "summary": _describe(pass_, facts), **facts}

    if kind == "merge":
        field = _LIST_FIELD[pass_]
        merged, seen = [], set()
        for m in re.finditer(r"^### Block \d+\n", text, re.M):
            try:
                obj = json.JSONDecoder().raw_decode(text, m.end())[0]
            except json.JSONDecodeError:
                continue
            for item in obj.get(field, []) if isinstance(obj, dict) else []:
                key = json.dumps(item, sort_keys=True)
                if key not in seen:
                    seen.add(key)
                    merged.append(item)
        if pass_ == "memsafe":
            merged = [c for c in merged if c.get("target") in params]
        out = {"function": name, "description": _describe(pass_, {field: merged}), field: merged}
        if pass_ == "verify":
            out["simplified_contracts"] = _section_json(text, "## Pre-conditions (assume these hold)") or []
        return out

    if kind != "summary":
        return {"function": name, "description": "unrecognised prompt"}

    lines = _body_lines(source)
    if pass_ in ("alloc", "free", "init", "memsafe"):
        facts = _pass_facts(pass_, lines, params, callees)
        return {"function": name, "description": _describe(pass_, facts), **facts}

    if pass_ == "int":
        constraints, issues = _int_rules([_scrub(l) for l in lines], params)
        return {"function": name, "description": f"{len(issues)} integer issue(s)",
                "constraints": constraints, "output_ranges": [], "issues": issues}

    if pass_ == "leak":
        code_lines = [_scrub(l) for l in lines]
        own_alloc = _section_json(text, "## This Function's Allocation Summary")
        own_free = _section_json(text, "## This Function's Free Summary")
        allocs = (own_alloc or {}).get("allocations") or _allocations(code_lines, params, callees)
        frees = (own_free or {}).get("frees") or _frees(code_lines, params, callees)
        freed = {f.get("target") for f in frees}
        is_entry = "is the program entry point" in text
        leaks, escaping = [], []
        for a in allocs:
            if a.get("type", "heap") != "heap":
                continue
            visible = a.get("returned") or (a.get("stored_to") and ("->" in a["stored_to"] or a["stored_to"].startswith("*")))
            if a.get("stored_to") in freed:
                continue
            if visible and not is_entry:
                escaping.append({k: a.get(k) for k in ("source", "size_expr", "returned", "stored_to", "may_be_null")})
                continue
            leaks.append({"allocation": f"{a.get('source')}({a.get('size_expr') or ''})", "stored_to": a.get("stored_to"),
                          "reason": "not freed, returned or stored to a caller-visible location", "severity": "high"})
        simplified_frees = [
            {k: f.get(k) for k in ("target", "target_kind", "deallocator", "conditional", "condition", "description")}
            for f in frees if f.get("target_kind") in ("parameter", "field")
        ]
        return {"function": name, "description": f"{len(leaks)} leak(s)", "leaks": leaks,
                "simplified_allocations": escaping, "simplified_frees": simplified_frees}

    # verify
    facts = _pass_facts("verify", lines, params, callees)
    own = _section_json(text, "## Pre-conditions (assume these hold)") or []
    return {"function": name, "description": _describe("verify", facts),
            "simplified_contracts": [c for c in own if isinstance(c, dict) and c.get("target") in params],
            "issues": facts["issues"]}

