"""Call graph construction and callee-first SCC scheduling."""

from __future__ import annotations

import heapq
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .extractor import CallsiteRecord, FunctionRecord, external_key

log = logging.getLogger(__name__)


def builtin_lib_attrs() -> dict[str, frozenset[str]]:
    raw = json.loads(resources.files("nlverify").joinpath("data/libattrs.json").read_text())
    return {name: frozenset(tags) for name, tags in raw.items()}


def load_lib_attrs(path: str | Path | None = None) -> dict[str, frozenset[str]]:
    """Built-in table, optionally extended/overridden by a JSON file."""
    table = builtin_lib_attrs()
    if path is not None:
        extra = json.loads(Path(path).read_text())
        if not isinstance(extra, dict) or not all(
            isinstance(v, list) and all(isinstance(t, str) for t in v) for v in extra.values()
        ):
            raise ValueError(f"{path}: expected an object mapping names to string arrays")
        table.update({k: frozenset(v) for k, v in extra.items()})
    return table


@dataclass(frozen=True)
class CallGraph:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    skipped_callsites: tuple[CallsiteRecord, ...]
    functions: Mapping[str, FunctionRecord] = field(default_factory=dict, compare=False)
    callsites: Mapping[str, tuple[CallsiteRecord, ...]] = field(default_factory=dict, compare=False)
    # (caller key, callee name) -> callee key
    resolved: Mapping[tuple[str, str], str] = field(default_factory=dict, compare=False)

    def callees(self, key: str) -> list[str]:
        return sorted({g for f, g in self.edges if f == key})

    def callers(self, key: str) -> list[str]:
        return sorted({f for f, g in self.edges if g == key})

    def is_external(self, key: str) -> bool:
        fn = self.functions.get(key)
        return fn is not None and fn.is_external

    def callee_key(self, caller: str, site: CallsiteRecord) -> str | None:
        if site.is_indirect:
            return None
        return self.resolved.get((caller, site.callee_name))

    def sites_of(self, key: str) -> tuple[CallsiteRecord, ...]:
        return self.callsites.get(key, ())


def build_call_graph(
    functions: Iterable[FunctionRecord],
    callsites: Iterable[CallsiteRecord],
    lib_attrs: Mapping[str, Iterable[str]] | None = None,
) -> CallGraph:
    lib_attrs = lib_attrs or {}
    by_key: dict[str, FunctionRecord] = {}
    by_name: dict[str, list[FunctionRecord]] = defaultdict(list)
    for fn in functions:
        by_key[fn.key] = fn
        by_name[fn.name].append(fn)

    edges: set[tuple[str, str]] = set()
    skipped: list[CallsiteRecord] = []
    resolved: dict[tuple[str, str], str] = {}
    sites: dict[str, list[CallsiteRecord]] = defaultdict(list)
    for site in callsites:
        caller = site.caller_key
        if caller not in by_key:
            # callsites recorded without a file fall back to name lookup
            cands = by_name.get(site.caller, [])
            if not cands:
                log.warning("callsite from unknown caller %s dropped", site.caller)
                continue
            caller = cands[0].key
        sites[caller].append(site)
        if site.is_indirect:
            skipped.append(site)
            continue
        cands = by_name.get(site.callee_name, [])
        if cands:
            same_file = [c for c in cands if c.file_path == site.file_path]
            target = (same_file or sorted(cands, key=lambda c: c.key))[0]
            if len(cands) > 1 and not same_file:
                log.warning(
                    "%s calls %s, defined in several files; using %s",
                    caller, site.callee_name, target.file_path,
                )
            callee = target.key
        else:
            stub = FunctionRecord.external(site.callee_name, lib_attrs.get(site.callee_name, ()))
            by_key.setdefault(stub.key, stub)
            callee = stub.key
        resolved[(caller, site.callee_name)] = callee
        edges.add((caller, callee))

    return CallGraph(
        nodes=frozenset(by_key),
        edges=frozenset(edges),
        skipped_callsites=tuple(skipped),
        functions=dict(by_key),
        callsites={k: tuple(v) for k, v in sites.items()},
        resolved=resolved,
    )


@dataclass(frozen=True)
class AnalysisOrder:
    sccs: tuple[tuple[str, ...], ...]
    is_recursive: tuple[bool, ...]

    def __iter__(self):
        return iter(zip(self.sccs, self.is_recursive))

    def __len__(self):
        return len(self.sccs)

    def ranks(self, graph: CallGraph) -> list[int]:
        """Longest-path depth of each SCC above the leaves of the condensation."""
        where = {n: i for i, scc in enumerate(self.sccs) for n in scc}
        rank = [0] * len(self.sccs)
        for i, scc in enumerate(self.sccs):
            deps = {where[g] for f, g in graph.edges if f in scc and where[g] != i}
            rank[i] = 1 + max((rank[j] for j in deps), default=-1)
        return rank


def _tarjan(nodes: list[str], succ: Mapping[str, list[str]]) -> list[list[str]]:
    """Iterative Tarjan; emits SCCs in reverse topological order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def compute_analysis_order(graph: CallGraph) -> AnalysisOrder:
    nodes = sorted(graph.nodes)
    succ: dict[str, list[str]] = defaultdict(list)
    for f, g in sorted(graph.edges):
        succ[f].append(g)
    comps = [tuple(sorted(c)) for c in _tarjan(nodes, succ)]

    where = {n: i for i, c in enumerate(comps) for n in c}
    pending = [0] * len(comps)  # callee SCCs not yet scheduled
    dependents: dict[int, set[int]] = defaultdict(set)
    for f, g in graph.edges:
        a, b = where[f], where[g]
        if a != b and a not in dependents[b]:
            dependents[b].add(a)
            pending[a] += 1

    def prio(i):
        # stubs first, then lexicographic by smallest member
        return (0 if all(graph.is_external(n) for n in comps[i]) else 1, comps[i][0])

    ready = [prio(i) + (i,) for i in range(len(comps)) if pending[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        *_, i = heapq.heappop(ready)
        order.append(i)
        for j in dependents[i]:
            pending[j] -= 1
            if pending[j] == 0:
                heapq.heappush(ready, prio(j) + (j,))

    self_loops = {f for f, g in graph.edges if f == g}
    sccs = tuple(comps[i] for i in order)
    return AnalysisOrder(
        sccs=sccs,
        is_recursive=tuple(len(c) > 1 or c[0] in self_loops for c in sccs),
    )


def affected_functions(graph: CallGraph, changed: Iterable[str]) -> set[str]:
    """`changed` plus every transitive caller."""
    changed = set(changed)
    unknown = changed - graph.nodes
    if unknown:
        raise KeyError(f"not in graph: {sorted(unknown)}")
    preds: dict[str, set[str]] = defaultdict(set)
    for f, g in graph.edges:
        preds[g].add(f)
    seen = set(changed)
    todo = list(changed)
    while todo:
        for f in preds[todo.pop()]:
            if f not in seen:
                seen.add(f)
                todo.append(f)
    return seen
