"""C front end.

Loads a compile_commands.json database, extracts function definitions,
callsites and type/macro context from each translation unit with the
tree-sitter C grammar, and splits oversized function bodies into blocks at
syntax boundaries.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import tree_sitter_c
from tree_sitter import Language, Node, Parser

log = logging.getLogger(__name__)

C_LANGUAGE = Language(tree_sitter_c.language())

UNRESOLVED = "<unresolved>"
DEFAULT_BLOCK_BUDGET = 24000

BOUNDARY_KINDS = ("if_else", "switch_case", "loop_body", "sequential_chunk")


class ExtractionError(Exception):
    pass


class MalformedDatabase(ExtractionError):
    pass


class ParseError(ExtractionError):
    pass


@dataclass(frozen=True)
class CompileCommand:
    directory: str
    file: str
    arguments: tuple[str, ...] | None = None
    command: str | None = None

    def __post_init__(self):
        if not self.file:
            raise MalformedDatabase("compile command has an empty 'file'")
        if (self.arguments is None) == (self.command is None):
            raise MalformedDatabase(
                f"{self.file}: exactly one of 'arguments' or 'command' is required"
            )

    def argv(self) -> list[str]:
        if self.arguments is not None:
            return list(self.arguments)
        return shlex.split(self.command)

    @property
    def source_path(self) -> Path:
        path = Path(self.file)
        return path if path.is_absolute() else Path(self.directory) / path


@dataclass(frozen=True)
class FunctionRecord:
    name: str
    signature: str
    params: tuple[tuple[str, str], ...]
    file_path: str
    line_span: tuple[int, int]
    body: str
    is_external: bool = False
    lib_attrs: frozenset[str] = frozenset()

    def __post_init__(self):
        names = [p for p, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: duplicate parameter names {names}")
        if self.is_external and self.body:
            raise ValueError(f"external record {self.name} must have an empty body")
        if not self.is_external and not self.body:
            raise ValueError(f"defined function {self.name} has an empty body")

    @property
    def key(self) -> str:
        return external_key(self.name) if self.is_external else f"{self.file_path}::{self.name}"

    @property
    def param_names(self) -> list[str]:
        return [p for p, _ in self.params]

    @classmethod
    def external(cls, name: str, lib_attrs: Iterable[str] = ()) -> "FunctionRecord":
        return cls(
            name=name,
            signature="",
            params=(),
            file_path="",
            line_span=(0, 0),
            body="",
            is_external=True,
            lib_attrs=frozenset(lib_attrs),
        )


def external_key(name: str) -> str:
    return f"ext::{name}"


@dataclass(frozen=True)
class CallsiteRecord:
    caller: str
    callee_name: str
    arg_exprs: tuple[str, ...]
    line: int
    is_indirect: bool = False
    # Where the caller is defined, and the call's row range relative to the
    # first line of the caller's body text (used for PRE/POST annotation).
    file_path: str = ""
    body_line: int = 0
    body_end_line: int = 0

    def __post_init__(self):
        if self.is_indirect and self.callee_name != UNRESOLVED:
            raise ValueError("indirect callsites must have an unresolved callee")

    @property
    def caller_key(self) -> str:
        return f"{self.file_path}::{self.caller}"


@dataclass(frozen=True)
class StructField:
    name: str
    type: str
    offset: int | None = None


@dataclass
class TypeContext:
    typedefs: dict[str, str] = field(default_factory=dict)
    structs: dict[str, list[StructField]] = field(default_factory=dict)
    sizeof_values: dict[str, int] = field(default_factory=dict)
    macros: dict[str, str] = field(default_factory=dict)
    globals: dict[str, str] = field(default_factory=dict)
    # "expanded" when the bodies came from the preprocessor, else "original".
    source_form: str = "original"

    def merge(self, other: "TypeContext") -> None:
        for mine, theirs in (
            (self.typedefs, other.typedefs),
            (self.structs, other.structs),
            (self.sizeof_values, other.sizeof_values),
            (self.macros, other.macros),
            (self.globals, other.globals),
        ):
            for k, v in theirs.items():
                mine.setdefault(k, v)

    def is_empty(self) -> bool:
        return not (self.typedefs or self.structs or self.sizeof_values or self.macros)

    def to_json(self) -> dict:
        return {
            "typedefs": self.typedefs,
            "structs": {
                k: [{"name": f.name, "type": f.type, "offset": f.offset} for f in v]
                for k, v in self.structs.items()
            },
            "sizeof_values": self.sizeof_values,
            "macros": self.macros,
            "globals": self.globals,
            "source_form": self.source_form,
        }


@dataclass(frozen=True)
class Block:
    parent: str
    index: int
    source: str
    boundary_kind: str
    oversized: bool = False


@dataclass
class Program:
    """Everything extracted from one compilation database."""

    functions: list[FunctionRecord]
    callsites: list[CallsiteRecord]
    type_ctx: TypeContext
    skipped_files: list[tuple[str, str]] = field(default_factory=list)

    def function(self, name: str) -> FunctionRecord:
        matches = [f for f in self.functions if f.name == name or f.key == name]
        if not matches:
            raise KeyError(name)
        return matches[0]


# --------------------------------------------------------------------------
# compilation database


def load_compilation_db(path: str | os.PathLike) -> list[CompileCommand]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDatabase(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, list):
        raise MalformedDatabase(f"{path}: top level must be a JSON array")
    commands = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise MalformedDatabase(f"{path}[{i}]: entry is not an object")
        for key in ("directory", "file"):
            if not isinstance(entry.get(key), str):
                raise MalformedDatabase(f"{path}[{i}]: missing or non-string '{key}'")
        args = entry.get("arguments")
        if args is not None and not (
            isinstance(args, list) and all(isinstance(a, str) for a in args)
        ):
            raise MalformedDatabase(f"{path}[{i}]: 'arguments' must be a string array")
        cmd = entry.get("command")
        if cmd is not None and not isinstance(cmd, str):
            raise MalformedDatabase(f"{path}[{i}]: 'command' must be a string")
        commands.append(
            CompileCommand(
                directory=entry["directory"],
                file=entry["file"],
                arguments=tuple(args) if args is not None else None,
                command=cmd,
            )
        )
    return commands


# --------------------------------------------------------------------------
# tree-sitter helpers


def _parse(src: bytes):
    # Parser objects are not shared between threads.
    return Parser(C_LANGUAGE).parse(src)


def _text(node: Node) -> str:
    return node.text.decode("utf-8", errors="replace")


def _walk(node: Node) -> Iterator[Node]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.children))


def _declarator_name(decl: Node | None) -> Node | None:
    while decl is not None:
        if decl.type in ("identifier", "field_identifier", "type_identifier", "primitive_type"):
            return decl
        if decl.type == "parenthesized_declarator":
            decl = next((c for c in decl.named_children if c.type != "comment"), None)
            continue
        decl = decl.child_by_field_name("declarator")
    return None


def _declares_function(decl: Node | None) -> bool:
    """True when the derivation applied directly to the identifier is `()`.

    `void *f(int)` declares a function; `void (*f)(int)` a pointer variable.
    """
    last = None
    while decl is not None and decl.type not in ("identifier", "field_identifier", "type_identifier"):
        if decl.type == "parenthesized_declarator":
            decl = next((c for c in decl.named_children if c.type != "comment"), None)
            continue
        last = decl
        decl = decl.child_by_field_name("declarator")
    return last is not None and last.type == "function_declarator"


def _function_declarator(decl: Node | None) -> Node | None:
    while decl is not None:
        if decl.type == "function_declarator":
            inner = decl.child_by_field_name("declarator")
            # `int (*f(void))(int)` nests function declarators; the outermost
            # one that names an identifier is the definition's own.
            if inner is not None and inner.type in ("identifier", "field_identifier"):
                return decl
            found = _function_declarator(inner)
            return found or decl
        if decl.type == "parenthesized_declarator":
            decl = next((c for c in decl.named_children if c.type != "comment"), None)
            continue
        decl = decl.child_by_field_name("declarator")
    return None


def _squash(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _type_text(decl_node: Node, name_node: Node | None) -> str:
    """Declaration text with the declared identifier cut out."""
    raw = decl_node.text
    if name_node is not None:
        lo = name_node.start_byte - decl_node.start_byte
        hi = name_node.end_byte - decl_node.start_byte
        raw = raw[:lo] + raw[hi:]
    text = _squash(raw.decode("utf-8", errors="replace"))
    return re.sub(r"\s+([\)\]\[,])", r"\1", text).replace("( ", "(")


# --------------------------------------------------------------------------
# preprocessing

_LINEMARKER = re.compile(rb'^#\s*(?:line\s+)?(\d+)\s+"((?:[^"\\]|\\.)*)"')


@dataclass
class _Source:
    text: bytes
    # preprocessed row -> (file name, original 1-based line); None = identity
    line_map: list[tuple[str, int]] | None = None
    main_file: str = ""

    def origin(self, row: int) -> tuple[str, int]:
        if self.line_map is None:
            return self.main_file, row + 1
        if row < len(self.line_map):
            return self.line_map[row]
        return self.line_map[-1] if self.line_map else (self.main_file, row + 1)

    def in_main_file(self, row: int) -> bool:
        return self.line_map is None or self.origin(row)[0] == self.main_file


def _preprocess(cmd: CompileCommand) -> _Source | None:
    argv = cmd.argv()
    if not argv:
        return None
    out = [argv[0]]
    skip = False
    for tok in argv[1:]:
        if skip:
            skip = False
            continue
        if tok in ("-c", "-S", "-E"):
            continue
        if tok in ("-o", "-MF", "-MT", "-MQ"):
            skip = True
            continue
        if tok.startswith("-o") or tok in ("-MD", "-MMD", "-M", "-MM"):
            continue
        if tok == cmd.file or os.path.normpath(tok) == os.path.normpath(cmd.file):
            continue
        out.append(tok)
    out += ["-E", cmd.file]
    try:
        proc = subprocess.run(
            out, cwd=cmd.directory or None, capture_output=True, timeout=120
        )
    except (OSError, subprocess.SubprocessError) as exc:
        log.warning("preprocessing %s failed (%s); using original source", cmd.file, exc)
        return None
    if proc.returncode != 0:
        log.warning(
            "preprocessing %s exited %d; using original source: %s",
            cmd.file,
            proc.returncode,
            proc.stderr.decode(errors="replace").strip()[:500],
        )
        return None
    lines = proc.stdout.split(b"\n")
    line_map: list[tuple[str, int]] = []
    cur_file, cur_line = cmd.file, 1
    main_file = None
    kept = []
    for raw in lines:
        m = _LINEMARKER.match(raw)
        if m:
            cur_line = int(m.group(1))
            cur_file = m.group(2).decode("utf-8", errors="replace")
            if main_file is None and not cur_file.startswith("<"):
                main_file = cur_file
            kept.append(b"")
            line_map.append((cur_file, cur_line))
            continue
        kept.append(raw)
        line_map.append((cur_file, cur_line))
        cur_line += 1
    return _Source(b"\n".join(kept), line_map, main_file or cmd.file)


# --------------------------------------------------------------------------
# type layout (LP64)

_PRIMITIVE_SIZES = {
    "char": 1, "signed char": 1, "unsigned char": 1, "_Bool": 1, "bool": 1,
    "short": 2, "short int": 2, "unsigned short": 2, "unsigned short int": 2,
    "signed short": 2, "int": 4, "signed": 4, "signed int": 4, "unsigned": 4,
    "unsigned int": 4, "long": 8, "long int": 8, "signed long": 8,
    "unsigned long": 8, "unsigned long int": 8, "long long": 8,
    "long long int": 8, "unsigned long long": 8, "unsigned long long int": 8,
    "signed long long": 8, "float": 4, "double": 8, "long double": 16,
    "size_t": 8, "ssize_t": 8, "ptrdiff_t": 8, "intptr_t": 8, "uintptr_t": 8,
    "off_t": 8, "int8_t": 1, "uint8_t": 1, "int16_t": 2, "uint16_t": 2,
    "int32_t": 4, "uint32_t": 4, "int64_t": 8, "uint64_t": 8, "wchar_t": 4,
}
_POINTER = (8, 8)


def _is_pointer(decl: Node) -> bool:
    return decl.type in ("pointer_declarator", "abstract_pointer_declarator")


class _Layout:
    """Best-effort sizeof/offset computation over one translation unit."""

    def __init__(self, macros: dict[str, str]):
        self.macros = macros
        self.typedef_nodes: dict[str, tuple[Node, Node]] = {}
        self.record_nodes: dict[str, Node] = {}
        self._cache: dict[str, tuple[int, int] | None] = {}
        self._open: set[tuple[int, int]] = set()  # records being laid out

    def const_int(self, node: Node | None, depth: int = 0) -> int | None:
        if node is None or depth > 16:
            return None
        if node.type == "number_literal":
            txt = _text(node).rstrip("uUlL")
            try:
                return int(txt, 0)
            except ValueError:
                return None
        if node.type == "identifier":
            expansion = self.macros.get(_text(node))
            if expansion is None or expansion.startswith("("):
                if expansion is not None and re.fullmatch(r"\(\s*[0-9xXa-fA-F]+[uUlL]*\s*\)", expansion):
                    return self.const_int_text(expansion[1:-1], depth + 1)
                return None
            return self.const_int_text(expansion, depth + 1)
        if node.type == "parenthesized_expression":
            inner = node.named_children
            return self.const_int(inner[0], depth + 1) if inner else None
        if node.type == "binary_expression":
            a = self.const_int(node.child_by_field_name("left"), depth + 1)
            b = self.const_int(node.child_by_field_name("right"), depth + 1)
            op = node.child_by_field_name("operator")
            if a is None or b is None or op is None:
                return None
            return {
                "+": lambda: a + b,
                "-": lambda: a - b,
                "*": lambda: a * b,
                "/": lambda: a // b if b else None,
                "<<": lambda: a << b if 0 <= b < 64 else None,
            }.get(op.type, lambda: None)()
        if node.type == "sizeof_expression":
            td = node.child_by_field_name("type")
            if td is not None:
                got = self.type_descriptor(td)
                return got[0] if got else None
        return None

    def const_int_text(self, text: str, depth: int) -> int | None:
        tree = _parse(f"int __x[{text}];".encode())
        decl = tree.root_node.named_children[0] if tree.root_node.named_children else None
        if decl is None:
            return None
        arr = decl.child_by_field_name("declarator")
        if arr is None or arr.type != "array_declarator":
            return None
        return self.const_int(arr.child_by_field_name("size"), depth)

    def spec(self, node: Node | None) -> tuple[int, int] | None:
        """(size, align) for a type specifier node."""
        if node is None:
            return None
        if node.type in ("primitive_type", "sized_type_specifier"):
            name = _squash(_text(node))
            name = re.sub(r"^(const|volatile) ", "", name)
            size = _PRIMITIVE_SIZES.get(name)
            if size is None:
                return self.typedef(name)
            return (size, size)
        if node.type == "type_identifier":
            name = _text(node)
            if name in _PRIMITIVE_SIZES:
                return (_PRIMITIVE_SIZES[name],) * 2
            return self.typedef(name)
        if node.type in ("struct_specifier", "union_specifier"):
            kw = "struct" if node.type == "struct_specifier" else "union"
            if node.child_by_field_name("body") is not None:
                return self.record(node)[0]
            name = node.child_by_field_name("name")
            if name is None:
                return None
            key = f"{kw} {_text(name)}"
            body = self.record_nodes.get(key)
            return self.record(body)[0] if body is not None else None
        if node.type == "enum_specifier":
            return (4, 4)
        return None

    def typedef(self, name: str) -> tuple[int, int] | None:
        if name in self._cache:
            return self._cache[name]
        self._cache[name] = None  # recursion guard
        pair = self.typedef_nodes.get(name)
        got = None
        if pair is not None:
            got = self.declarator(self.spec(pair[0]), pair[1])
        self._cache[name] = got
        return got

    def declarator(self, base: tuple[int, int] | None, decl: Node | None):
        if decl is None or decl.type in ("identifier", "field_identifier", "type_identifier", "primitive_type"):
            return base
        if decl.type in ("pointer_declarator", "abstract_pointer_declarator"):
            return _POINTER
        if decl.type in ("function_declarator", "abstract_function_declarator"):
            return None  # bare function types have no size
        if decl.type in ("parenthesized_declarator", "abstract_parenthesized_declarator"):
            inner = next((c for c in decl.named_children if c.type != "comment"), None)
            if inner is not None and inner.type in ("pointer_declarator", "abstract_pointer_declarator"):
                return _POINTER
            return self.declarator(base, inner)
        if decl.type in ("array_declarator", "abstract_array_declarator"):
            elem = self.declarator(base, decl.child_by_field_name("declarator"))
            if elem is None:
                return None
            size_node = decl.child_by_field_name("size")
            if size_node is None:
                return (0, elem[1])  # flexible array member
            n = self.const_int(size_node)
            return (elem[0] * n, elem[1]) if n is not None and n >= 0 else None
        return None

    def type_descriptor(self, td: Node) -> tuple[int, int] | None:
        return self.declarator(self.spec(td.child_by_field_name("type")), td.child_by_field_name("declarator"))

    def record(self, node: Node) -> tuple[tuple[int, int] | None, list[StructField]]:
        is_union = node.type == "union_specifier"
        body = node.child_by_field_name("body")
        fields: list[StructField] = []
        if body is None or node.byte_range in self._open:
            return None, fields
        self._open.add(node.byte_range)
        try:
            return self._record(node, body, is_union, fields)
        finally:
            self._open.discard(node.byte_range)

    def _record(self, node: Node, body: Node, is_union: bool, fields: list[StructField]):
        offset, max_align, size_u = 0, 1, 0
        resolvable = True
        for fd in body.named_children:
            if fd.type != "field_declaration":
                continue
            ftype = fd.child_by_field_name("type")
            decls = [c for c in fd.children_by_field_name("declarator")]
            has_bitfield = any(c.type == "bitfield_clause" for c in fd.children)
            if not decls:
                # anonymous struct/union member
                resolvable = False
                fields.append(StructField("", _squash(_text(ftype)) if ftype else "", None))
                continue
            for d in decls:
                name_node = _declarator_name(d)
                fname = _text(name_node) if name_node is not None else ""
                ftext = _type_text(fd, name_node).rstrip(";").strip()
                if len(decls) > 1 and ftype is not None:
                    ftext = _squash(_text(ftype) + " " + _type_text(d, name_node))
                # pointers need no pointee layout, which also breaks self-reference cycles
                base = _POINTER if _is_pointer(d) else self.spec(ftype)
                got = None if has_bitfield else self.declarator(base, d)
                if got is None:
                    resolvable = False
                if not resolvable or is_union:
                    fields.append(StructField(fname, ftext, None))
                    if got is not None:
                        size_u = max(size_u, got[0])
                        max_align = max(max_align, got[1])
                    continue
                fsize, falign = got
                offset = -(-offset // falign) * falign
                fields.append(StructField(fname, ftext, offset))
                offset += fsize
                max_align = max(max_align, falign)
        if not resolvable:
            return None, [StructField(f.name, f.type, None) for f in fields]
        total = size_u if is_union else offset
        total = -(-total // max_align) * max_align
        return (total, max_align), fields


# --------------------------------------------------------------------------
# translation unit extraction


def _collect_macros(root: Node) -> dict[str, str]:
    macros: dict[str, str] = {}
    for node in _walk(root):
        if node.type == "preproc_def":
            name = node.child_by_field_name("name")
            value = node.child_by_field_name("value")
            if name is not None:
                macros.setdefault(_text(name), _text(value).strip() if value is not None else "")
        elif node.type == "preproc_function_def":
            name = node.child_by_field_name("name")
            params = node.child_by_field_name("parameters")
            value = node.child_by_field_name("value")
            if name is not None:
                expansion = (_text(params) if params is not None else "()") + " " + (
                    _text(value).strip() if value is not None else ""
                )
                macros.setdefault(_text(name), expansion.strip())
    return macros


def _declared_names(node: Node) -> set[str]:
    """Variable names declared by declarations/parameters under node."""
    names: set[str] = set()
    for n in _walk(node):
        if n.type in ("declaration", "parameter_declaration"):
            for d in n.children_by_field_name("declarator"):
                if d.type == "init_declarator":
                    d = d.child_by_field_name("declarator")
                if d is None or _declares_function(d):
                    continue
                nm = _declarator_name(d)
                if nm is not None and nm.type == "identifier":
                    names.add(_text(nm))
    return names


def _params(fdecl: Node) -> tuple[tuple[str, str], ...]:
    plist = fdecl.child_by_field_name("parameters")
    out: list[tuple[str, str]] = []
    if plist is None:
        return ()
    decls = [c for c in plist.named_children if c.type == "parameter_declaration"]
    for i, pd in enumerate(decls):
        name_node = _declarator_name(pd.child_by_field_name("declarator"))
        if name_node is None or name_node.type != "identifier":
            if _squash(_text(pd)) == "void" and len(decls) == 1:
                return ()
            out.append((f"_arg{i}", _squash(_text(pd))))
            continue
        out.append((_text(name_node), _type_text(pd, name_node)))
    seen: set[str] = set()
    uniq = []
    for i, (n, t) in enumerate(out):
        if n in seen:
            n = f"{n}_{i}"
        seen.add(n)
        uniq.append((n, t))
    return tuple(uniq)


def extract_translation_unit(
    cmd: CompileCommand, preprocess: bool = False
) -> tuple[list[FunctionRecord], list[CallsiteRecord], TypeContext]:
    path = cmd.source_path
    try:
        original = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"{cmd.file}: cannot read ({exc})") from exc

    orig_tree = _parse(original)
    macros = _collect_macros(orig_tree.root_node)

    source = _Source(original, None, cmd.file)
    form = "original"
    if preprocess:
        expanded = _preprocess(cmd)
        if expanded is not None:
            source, form = expanded, "expanded"
    tree = orig_tree if source.text is original else _parse(source.text)
    root = tree.root_node

    fn_nodes = [n for n in root.named_children if n.type == "function_definition"]
    if root.has_error and not fn_nodes:
        raise ParseError(f"{cmd.file}: no function definitions could be parsed")

    layout = _Layout(macros)
    type_ctx = TypeContext(source_form=form)
    global_vars: set[str] = set()
    for node in _walk(root):
        if node.type == "function_definition":
            continue
        if node.type in ("struct_specifier", "union_specifier") and node.child_by_field_name("body") is not None:
            name = node.child_by_field_name("name")
            if name is not None:
                kw = "struct" if node.type == "struct_specifier" else "union"
                layout.record_nodes.setdefault(f"{kw} {_text(name)}", node)
        if node.type == "type_definition":
            tspec = node.child_by_field_name("type")
            for d in node.children_by_field_name("declarator"):
                nm = _declarator_name(d)
                if nm is not None and tspec is not None:
                    layout.typedef_nodes.setdefault(_text(nm), (tspec, d))

    for node in root.named_children:
        main = source.in_main_file(node.start_point[0])
        if node.type == "type_definition" and main:
            tspec = node.child_by_field_name("type")
            for d in node.children_by_field_name("declarator"):
                nm = _declarator_name(d)
                if nm is None:
                    continue
                tname = _text(nm)
                type_ctx.typedefs[tname] = _squash(_text(node))
                got = layout.typedef(tname)
                if got is not None:
                    type_ctx.sizeof_values[tname] = got[0]
                if tspec is not None and tspec.type in ("struct_specifier", "union_specifier") and tspec.child_by_field_name("body") is not None:
                    sname = tspec.child_by_field_name("name")
                    if sname is None:
                        _, fields = layout.record(tspec)
                        type_ctx.structs[tname] = fields
        if node.type == "declaration" and main:
            for d in node.children_by_field_name("declarator"):
                inner = d.child_by_field_name("declarator") if d.type == "init_declarator" else d
                if inner is None or _declares_function(inner):
                    continue
                nm = _declarator_name(inner)
                if nm is not None and nm.type == "identifier":
                    global_vars.add(_text(nm))
                    type_ctx.globals[_text(nm)] = _squash(_text(node))
        elif node.type == "declaration":
            for d in node.children_by_field_name("declarator"):
                inner = d.child_by_field_name("declarator") if d.type == "init_declarator" else d
                if inner is not None and not _declares_function(inner):
                    nm = _declarator_name(inner)
                    if nm is not None and nm.type == "identifier":
                        global_vars.add(_text(nm))

    for key, rnode in layout.record_nodes.items():
        if not source.in_main_file(rnode.start_point[0]):
            continue
        got, fields = layout.record(rnode)
        type_ctx.structs[key] = fields
        if got is not None:
            type_ctx.sizeof_values[key] = got[0]

    for node in _walk(root):
        if node.type == "sizeof_expression" and source.in_main_file(node.start_point[0]):
            td = node.child_by_field_name("type")
            if td is not None:
                got = layout.type_descriptor(td)
                if got is not None:
                    type_ctx.sizeof_values.setdefault(_squash(_text(td)), got[0])

    type_ctx.macros = macros
    func_like = {k for k, v in macros.items() if v.startswith("(")} if form == "original" else set()

    functions: list[FunctionRecord] = []
    callsites: list[CallsiteRecord] = []
    for fnode in fn_nodes:
        if not source.in_main_file(fnode.start_point[0]):
            continue
        decl = fnode.child_by_field_name("declarator")
        body = fnode.child_by_field_name("body")
        fdecl = _function_declarator(decl)
        name_node = _declarator_name(fdecl) if fdecl is not None else None
        if fdecl is None or name_node is None or body is None:
            log.warning("%s: skipping unnamed function definition at row %d", cmd.file, fnode.start_point[0] + 1)
            continue
        if fnode.has_error:
            log.warning("%s: %s contains parse errors", cmd.file, _text(name_node))
        name = _text(name_node)
        header = source.text[fnode.start_byte : body.start_byte].decode("utf-8", errors="replace")
        start_row, end_row = fnode.start_point[0], fnode.end_point[0]
        record = FunctionRecord(
            name=name,
            signature=_squash(header),
            params=_params(fdecl),
            file_path=cmd.file,
            line_span=(source.origin(start_row)[1], source.origin(end_row)[1]),
            body=_text(fnode),
        )
        functions.append(record)
        local = _declared_names(fnode) | global_vars
        for call in _walk(body):
            if call.type != "call_expression":
                continue
            target = call.child_by_field_name("function")
            args = call.child_by_field_name("arguments")
            arg_exprs = tuple(
                _text(a) for a in (args.named_children if args is not None else []) if a.type != "comment"
            )
            direct = target is not None and target.type == "identifier" and _text(target) not in local
            if direct and _text(target) in func_like:
                continue
            callsites.append(
                CallsiteRecord(
                    caller=name,
                    callee_name=_text(target) if direct else UNRESOLVED,
                    arg_exprs=arg_exprs,
                    line=source.origin(call.start_point[0])[1],
                    is_indirect=not direct,
                    file_path=cmd.file,
                    body_line=call.start_point[0] - start_row,
                    body_end_line=call.end_point[0] - start_row,
                )
            )
    return functions, callsites, type_ctx


def extract_program(
    commands: list[CompileCommand], preprocess: bool = False, jobs: int = 1
) -> Program:
    """Extract every translation unit and merge results deterministically."""

    def one(cmd):
        try:
            return cmd, extract_translation_unit(cmd, preprocess), None
        except ParseError as exc:
            log.error("skipping %s: %s", cmd.file, exc)
            return cmd, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(one, commands))

    functions: list[FunctionRecord] = []
    callsites: list[CallsiteRecord] = []
    type_ctx = TypeContext(source_form="expanded" if preprocess else "original")
    skipped = []
    for cmd, got, err in sorted(results, key=lambda r: r[0].file):
        if got is None:
            skipped.append((cmd.file, err))
            continue
        fns, sites, tctx = got
        functions.extend(fns)
        callsites.extend(sites)
        type_ctx.merge(tctx)
        if tctx.source_form == "original":
            type_ctx.source_form = "original"
    functions.sort(key=lambda f: (f.file_path, f.line_span))
    callsites.sort(key=lambda c: (c.file_path, c.line, c.body_line))
    seen: dict[str, str] = {}
    for f in functions:
        if f.name in seen and seen[f.name] != f.file_path:
            log.warning("function %s defined in both %s and %s", f.name, seen[f.name], f.file_path)
        seen.setdefault(f.name, f.file_path)
    return Program(functions, callsites, type_ctx, skipped)


def program_from_sources(paths: list[str | os.PathLike], preprocess: bool = False) -> Program:
    """Build a Program from bare C files (benchmark tasks ship no database)."""
    commands = []
    for p in paths:
        p = Path(p)
        commands.append(
            CompileCommand(directory=str(p.parent), file=p.name, arguments=("cc", "-c", p.name))
        )
    return extract_program(commands, preprocess)


# --------------------------------------------------------------------------
# block splitting

_LOOPS = ("for_statement", "while_statement", "do_statement")


def _stmt_kind(node: Node, inherited: str) -> str:
    if node.type == "if_statement":
        return "if_else"
    if node.type == "switch_statement":
        return "switch_case"
    if node.type in _LOOPS:
        return "loop_body"
    return inherited


def _children_for(node: Node, kind: str) -> list[tuple[int, Node, str]]:
    """Refinement points inside a statement: (cut byte, child, kind)."""
    if node.type == "compound_statement":
        stmts = [c for c in node.named_children]
        return [(c.start_byte, c, _stmt_kind(c, kind)) for c in stmts]
    if node.type == "if_statement":
        out = []
        cut, cur = node.start_byte, node
        while True:
            cons = cur.child_by_field_name("consequence")
            if cons is not None:
                out.append((cut, cons, "if_else"))
            alt = cur.child_by_field_name("alternative")
            stmt = None
            if alt is not None:
                stmt = next((c for c in alt.named_children if c.type != "comment"), None)
            if stmt is None:
                break
            if stmt.type == "if_statement":
                # else-if: cut at `else`, descend into the nested arm
                cut, cur = alt.start_byte, stmt
                continue
            out.append((alt.start_byte, stmt, "if_else"))
            break
        return out
    if node.type == "switch_statement":
        body = node.child_by_field_name("body")
        if body is None:
            return []
        return [(c.start_byte, c, "switch_case") for c in body.named_children]
    if node.type == "case_statement":
        value = node.child_by_field_name("value")
        stmts = [c for c in node.named_children if c is not value]
        return [(c.start_byte, c, "switch_case") for c in stmts]
    if node.type in _LOOPS:
        body = node.child_by_field_name("body")
        if body is None:
            return []
        if body.type == "compound_statement":
            return [(c.start_byte, c, "loop_body") for c in body.named_children]
        return [(body.start_byte, body, "loop_body")]
    if node.type == "labeled_statement":
        inner = [c for c in node.named_children if c.type != "statement_identifier"]
        return [(c.start_byte, c, kind) for c in inner]
    return []


def _refine(src: bytes, start: int, end: int, node: Node, kind: str, budget: int, depth: int = 0):
    size = len(src[start:end].decode("utf-8", errors="replace"))
    if size <= budget or depth > 200:
        return [(start, end, kind, size > budget)]
    kids = _children_for(node, kind)
    kids = [k for k in kids if start <= k[0] < end]
    if not kids:
        return [(start, end, kind, True)]
    if len(kids) == 1 and kids[0][1].start_byte == node.start_byte and kids[0][1].end_byte == node.end_byte:
        return [(start, end, kind, True)]
    bounds = [start] + [k[0] for k in kids[1:]] + [end]
    pieces = []
    for (cut, child, ckind), lo, hi in zip(kids, bounds[:-1], bounds[1:]):
        if lo >= hi:
            continue
        pieces.extend(_refine(src, lo, hi, child, ckind, budget, depth + 1))
    return pieces


def _line_chunks(text: str, budget: int) -> list[tuple[str, bool]]:
    chunks, cur = [], ""
    for line in text.splitlines(keepends=True):
        if cur and len(cur) + len(line) > budget:
            chunks.append(cur)
            cur = ""
        cur += line
    if cur:
        chunks.append(cur)
    return [(c, len(c) > budget) for c in chunks]


def split_function_blocks(fn: FunctionRecord, budget: int = DEFAULT_BLOCK_BUDGET) -> list[Block]:
    if fn.is_external:
        raise ValueError(f"{fn.name} is external and has no body to split")
    if budget <= 0:
        raise ValueError("block budget must be positive")
    if len(fn.body) <= budget:
        return [Block(fn.name, 0, fn.body, "sequential_chunk")]

    src = fn.body.encode("utf-8")
    root = _parse(src).root_node
    fnode = next((n for n in root.named_children if n.type == "function_definition"), None)
    body = fnode.child_by_field_name("body") if fnode is not None else None
    if body is None:
        log.warning("%s: cannot parse body for block splitting; using line chunks", fn.name)
        return [
            Block(fn.name, i, text, "sequential_chunk", over)
            for i, (text, over) in enumerate(_line_chunks(fn.body, budget))
        ]
    pieces = _refine(src, 0, len(src), body, "sequential_chunk", budget)

    groups: list[list[tuple[str, str, bool]]] = []
    cur: list[tuple[str, str, bool]] = []
    cur_len = 0
    for lo, hi, kind, over in pieces:
        text = src[lo:hi].decode("utf-8", errors="replace")
        if cur and cur_len + len(text) > budget:
            groups.append(cur)
            cur, cur_len = [], 0
        cur.append((text, kind, over))
        cur_len += len(text)
    if cur:
        groups.append(cur)

    blocks = []
    for i, group in enumerate(groups):
        text = "".join(t for t, _, _ in group)
        kind = max(group, key=lambda g: len(g[0]))[1]
        over = len(text) > budget
        if over:
            log.warning("%s: block %d is %d chars, over the %d budget", fn.name, i, len(text), budget)
        blocks.append(Block(fn.name, i, text, kind, over))
    return blocks
