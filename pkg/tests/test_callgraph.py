import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlverify.callgraph import (
    CallGraph,
    affected_functions,
    build_call_graph,
    builtin_lib_attrs,
    compute_analysis_order,
    load_lib_attrs,
)
from nlverify.extractor import UNRESOLVED, CallsiteRecord, FunctionRecord

from .oracles import brute_force_sccs, reachability


def fn(name, path="a.c"):
    return FunctionRecord(name, f"void {name}(void)", (), path, (1, 1), f"void {name}(void) {{}}")


def call(caller, callee, path="a.c", indirect=False):
    return CallsiteRecord(caller, UNRESOLVED if indirect else callee, (), 1, indirect, path)


def graph_of(nodes, edges):
    return CallGraph(nodes=frozenset(nodes), edges=frozenset(edges), skipped_callsites=())


def test_direct_edge():
    g = build_call_graph([fn("f"), fn("g")], [call("f", "g")])
    assert g.edges == {("a.c::f", "a.c::g")}


def test_external_stub_with_attrs():
    g = build_call_graph([fn("f")], [call("f", "exit")], {"exit": {"noreturn"}})
    stub = g.functions["ext::exit"]
    assert stub.is_external and stub.lib_attrs == {"noreturn"}
    assert ("a.c::f", "ext::exit") in g.edges


def test_indirect_call_skipped():
    g = build_call_graph([fn("f")], [call("f", None, indirect=True)])
    assert g.edges == frozenset()
    assert len(g.skipped_callsites) == 1


def test_same_file_definition_preferred():
    fns = [fn("f", "a.c"), fn("h", "a.c"), fn("h", "b.c"), fn("k", "b.c")]
    g = build_call_graph(fns, [call("f", "h", "a.c"), call("k", "h", "b.c")])
    assert g.edges == {("a.c::f", "a.c::h"), ("b.c::k", "b.c::h")}


def test_edges_stay_inside_nodes_and_stubs_have_no_out_edges(corpus):
    g = build_call_graph(corpus.functions, corpus.callsites, load_lib_attrs())
    assert all(f in g.nodes and t in g.nodes for f, t in g.edges)
    assert not any(g.is_external(f) for f, _ in g.edges)
    assert {k for k in g.nodes if g.is_external(k)} == {"ext::malloc", "ext::free"}


def test_builtin_table_tags():
    table = builtin_lib_attrs()
    assert len(table) >= 40
    assert "noreturn" in table["exit"] and "noreturn" in table["abort"]
    assert "allocator" in table["malloc"] and "deallocator" in table["free"]


def test_lib_attrs_file_extends_table(tmp_path):
    extra = tmp_path / "attrs.json"
    extra.write_text(json.dumps({"die": ["noreturn"]}))
    table = load_lib_attrs(extra)
    assert table["die"] == {"noreturn"} and "exit" in table
    extra.write_text(json.dumps({"die": "noreturn"}))
    with pytest.raises(ValueError):
        load_lib_attrs(extra)


def test_singleton_order():
    order = compute_analysis_order(graph_of({"f"}, set()))
    assert list(order) == [(("f",), False)]


def test_mutual_recursion_one_scc():
    order = compute_analysis_order(graph_of({"f", "g"}, {("f", "g"), ("g", "f")}))
    assert list(order) == [(("f", "g"), True)]


def test_self_loop_is_recursive():
    order = compute_analysis_order(graph_of({"f", "g"}, {("f", "f"), ("f", "g")}))
    assert list(order) == [(("g",), False), (("f",), True)]


def test_chain_is_callee_first():
    order = compute_analysis_order(graph_of({"main", "helper", "leaf"}, {("main", "helper"), ("helper", "leaf")}))
    assert [c for c, _ in order] == [("leaf",), ("helper",), ("main",)]


def test_independent_sccs_lexicographic():
    order = compute_analysis_order(graph_of({"d", "b", "c", "a"}, set()))
    assert [c for c, _ in order] == [("a",), ("b",), ("c",), ("d",)]


def test_stubs_scheduled_first(corpus):
    g = build_call_graph(corpus.functions, corpus.callsites, load_lib_attrs())
    order = [c[0] for c, _ in compute_analysis_order(g)]
    assert order[:2] == ["ext::free", "ext::malloc"]
    assert order.index("list.c::node_new") < order.index("list.c::list_push") < order.index("list.c::main")


def test_ranks_respect_dependencies(corpus):
    g = build_call_graph(corpus.functions, corpus.callsites, load_lib_attrs())
    order = compute_analysis_order(g)
    rank = {c[0]: r for (c, _), r in zip(order, order.ranks(g))}
    for f, t in g.edges:
        assert rank[t] < rank[f]


def test_affected_functions():
    g = graph_of({"main", "helper", "leaf"}, {("main", "helper"), ("helper", "leaf")})
    assert affected_functions(g, {"leaf"}) == {"leaf", "helper", "main"}
    assert affected_functions(g, {"main"}) == {"main"}
    assert affected_functions(g, set()) == set()
    with pytest.raises(KeyError):
        affected_functions(g, {"nope"})


@st.composite
def digraphs(draw, max_nodes=12):
    n = draw(st.integers(min_value=1, max_value=max_nodes))
    nodes = [f"n{i:02d}" for i in range(n)]
    pairs = [(a, b) for a in nodes for b in nodes]
    edges = draw(st.sets(st.sampled_from(pairs), max_size=len(pairs) // 2))
    return nodes, edges


@settings(max_examples=150, deadline=None)
@given(digraphs())
def test_order_matches_brute_force(graph):
    nodes, edges = graph
    order = compute_analysis_order(graph_of(nodes, edges))
    assert {frozenset(c) for c in order.sccs} == brute_force_sccs(nodes, edges)
    pos = {n: i for i, c in enumerate(order.sccs) for n in c}
    assert all(pos[g] <= pos[f] for f, g in edges)
    for c, rec in order:
        assert rec == (len(c) > 1 or (c[0], c[0]) in edges)


@settings(max_examples=80, deadline=None)
@given(digraphs())
def test_order_is_deterministic(graph):
    nodes, edges = graph
    a = compute_analysis_order(graph_of(nodes, edges))
    b = compute_analysis_order(graph_of(list(reversed(nodes)), set(edges)))
    assert a == b


@settings(max_examples=80, deadline=None)
@given(digraphs(), st.data())
def test_affected_is_transitive_callers(graph, data):
    nodes, edges = graph
    changed = data.draw(st.sets(st.sampled_from(nodes)))
    reach = reachability(nodes, edges)
    expected = {f for f in nodes if any(c in reach[f] for c in changed)}
    assert affected_functions(graph_of(nodes, edges), changed) == expected
