import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlverify.callgraph import build_call_graph, load_lib_attrs
from nlverify.extractor import Block, program_from_sources, split_function_blocks
from nlverify.prompts import (
    CACHE_MODES,
    SUMMARIZER_PASSES,
    ContextOverflow,
    PromptBundle,
    Templates,
    UnknownPass,
    annotate_callsites,
    fill,
    render_baseline_prompt,
    render_block_prompt,
    render_external_prompt,
    render_summarizer_prompt,
    render_verifier_prompt,
    strip_annotations,
)
from nlverify.summaries import CalleeContext, Contract, SummaryKey, SummaryStore, callee_context, validate

from .helpers import make_function


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def _graph(program):
    return build_call_graph(program.functions, program.callsites, load_lib_attrs())


def test_alloc_single_message_no_callees():
    fn = make_function("    return x;\n")
    b = render_summarizer_prompt("alloc", fn, CalleeContext(()))
    assert b.system is None and b.cacheable == "none"
    assert b.user.startswith("You are analyzing C/C++ code to generate memory allocation summaries.")
    assert "## Callee Summaries\n(none)" in b.user
    assert b.messages() == [{"role": "user", "content": b.user}]


def test_alloc_cached_instructions_layout():
    fn = make_function("    return x;\n")
    b = render_summarizer_prompt("alloc", fn, CalleeContext(()), cache_mode="instructions")
    assert b.cacheable == "system"
    assert "## Task" in b.system and fn.body not in b.system
    assert fn.body in b.user and "## Task" not in b.user
    assert "## Callee Summaries" in b.user
    assert [m["role"] for m in b.messages()] == ["system", "user"]


def test_source_mode_puts_function_in_system():
    fn = make_function("    return x;\n")
    b = render_summarizer_prompt("free", fn, CalleeContext(()), cache_mode="source")
    assert fn.body in b.system and fn.body not in b.user


@pytest.mark.parametrize("pass_", SUMMARIZER_PASSES)
def test_cache_modes_carry_the_same_sections(corpus, pass_):
    fn = corpus.function("main")
    ctx = callee_context(SummaryStore(), fn, _graph(corpus), pass_)
    texts = [render_summarizer_prompt(pass_, fn, ctx, cache_mode=m).text() for m in CACHE_MODES]
    for t in texts:
        assert fn.body in t
        # memsafe carries callee facts as inline annotations instead
        assert pass_ == "memsafe" or "### list_push" in t
        assert f"Signature: {fn.signature}" in t


def test_leak_entry_note_only_for_entry(corpus):
    ctx = CalleeContext(())
    main = render_summarizer_prompt("leak", corpus.function("main"), ctx)
    other = render_summarizer_prompt("leak", corpus.function("list_push"), ctx)
    assert "main is the program entry point" in main.user
    assert "program entry point" not in other.user
    moved = render_summarizer_prompt("leak", corpus.function("list_push"), ctx, entry="list_push")
    assert "list_push is the program entry point" in moved.user


def test_unknown_pass_and_mode():
    fn = make_function("    return x;\n")
    with pytest.raises(UnknownPass):
        render_summarizer_prompt("verify", fn, CalleeContext(()))
    with pytest.raises(UnknownPass):
        render_block_prompt("leak", fn, Block("f", 0, "x;\n", "statement"), [])
    with pytest.raises(ValueError):
        render_summarizer_prompt("alloc", fn, CalleeContext(()), cache_mode="everything")


def test_fill_leaves_unknown_placeholders_and_json():
    assert fill('{name} {"a": {b}} {other}', {"name": "f", "b": "1"}) == 'f {"a": 1} {other}'
    # substituted text is never expanded again
    assert fill("{source}", {"source": "{name}", "name": "x"}) == "{name}"


# -- blocks


def test_first_block_has_no_prior_comments():
    fn = make_function("    return x;\n")
    b = render_block_prompt("alloc", fn, Block("f", 0, "    return x;\n", "statement"), [])
    assert "/* BLOCK" not in b.user


def test_second_block_carries_prior_summary():
    fn = make_function("    return x;\n")
    b = render_block_prompt("alloc", fn, Block("f", 1, "    return x;\n", "statement"), ["allocates buf of n bytes"])
    assert "/* BLOCK 0: allocates buf of n bytes */\n    return x;\n" in b.user


def test_block_comment_cannot_be_closed_by_summary():
    fn = make_function("    return x;\n")
    b = render_block_prompt("free", fn, Block("f", 1, "y;\n", "statement"), ["ends */ early\nand wraps"])
    assert "/* BLOCK 0: ends * / early and wraps */\ny;\n" in b.user


def test_verify_block_states_own_preconditions():
    fn = make_function("    return x;\n")
    b = render_block_prompt("verify", fn, Block("f", 0, "x;\n", "statement"), [],
                            own_contracts=[Contract("x", "non_negative")])
    assert "## This Function's Pre-conditions -- assume these hold" in b.user
    assert '"contract_kind": "non_negative"' in b.user


# -- external


@pytest.mark.parametrize("name", ["free", "memcpy"])
def test_external_prompt_names_function(name):
    b = render_external_prompt(name)
    assert f"Function name: {name}" in b.user
    for key in ('"allocation"', '"free"', '"init"', '"memsafe"'):
        assert key in b.user


@pytest.mark.parametrize("name", ["", "a b", "1x", "f()"])
def test_external_prompt_rejects_non_identifiers(name):
    with pytest.raises(ValueError):
        render_external_prompt(name)


# -- callsite annotation


def _two_function(tmp_path, caller_body="    g(p);\n"):
    src = _write(tmp_path, "t.c", f"void g(int *q)\n{{\n    *q = 1;\n}}\n\nvoid f(int *p)\n{{\n{caller_body}}}\n")
    program = program_from_sources([src])
    return program, _graph(program)


def _store_contracts(program, name, contracts):
    store = SummaryStore()
    fn = program.function(name)
    store.upsert(SummaryKey(fn.key, "memsafe", "h"),
                 validate("memsafe", {"function": name, "description": "", "contracts": contracts}))
    return store


def test_pre_substitutes_actual(tmp_path):
    program, graph = _two_function(tmp_path)
    store = _store_contracts(program, "g", [{"target": "q", "contract_kind": "disallow_null"}])
    ann = annotate_callsites(program.function("f"), graph, store, "verify")
    assert "    /* PRE[g]: q -> p must not be NULL */\n    g(p);" in ann.text
    assert ann.substitutions == ((program.callsites[0].line, "q", "p"),)
    assert ann.strip() == program.function("f").body


def test_field_names_are_not_substituted(tmp_path):
    program, graph = _two_function(tmp_path, "    g(s->q);\n")
    store = _store_contracts(program, "g", [{"target": "q->q", "contract_kind": "disallow_null"}])
    ann = annotate_callsites(program.function("f"), graph, store, "verify")
    assert "/* PRE[g]: q->q -> (s->q)->q must not be NULL */" not in ann.text
    assert "/* PRE[g]: q->q -> s->q->q must not be NULL */" in ann.text


def test_non_formal_target_is_marked(tmp_path):
    program, graph = _two_function(tmp_path)
    store = _store_contracts(program, "g", [{"target": "global_buf", "contract_kind": "not_freed"}])
    ann = annotate_callsites(program.function("f"), graph, store, "verify")
    assert "/* PRE[g]: (formal) global_buf must not be freed */" in ann.text


def test_buffer_size_rewrites_size_expression(tmp_path):
    src = _write(tmp_path, "t.c", "void g(char *b, int n) { b[n - 1] = 0; }\nvoid f(char *buf) { g(buf, 8); }\n")
    program = program_from_sources([src])
    store = _store_contracts(program, "g", [
        {"target": "b", "contract_kind": "buffer_size", "size_expr": "n", "relationship": "element_count"}
    ])
    ann = annotate_callsites(program.function("f"), _graph(program), store, "verify")
    assert "/* PRE[g]: b -> buf must point to at least 8 elements */" in ann.text


def test_no_callsites_returns_body(corpus):
    fn = corpus.function("list_sum")
    ann = annotate_callsites(fn, _graph(corpus), SummaryStore(), "verify")
    assert ann.text == fn.body and ann.substitutions == ()


def test_noreturn_stub_gets_post(tmp_path):
    src = _write(tmp_path, "t.c", "#include <stdlib.h>\nvoid f(int x)\n{\n    if (x)\n        exit(1);\n}\n")
    program = program_from_sources([src])
    ann = annotate_callsites(program.function("f"), _graph(program), SummaryStore(), "verify")
    assert "        exit(1);\n        /* POST[exit]: does not return */" in ann.text


def test_corpus_annotation_round_trips(corpus):
    from .snapshots import load_corpus

    _, store = load_corpus()
    graph = _graph(corpus)
    for fn in corpus.functions:
        for pass_ in ("verify", "memsafe"):
            assert annotate_callsites(fn, graph, store, pass_).strip() == fn.body


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["    x = 1;", "    /* PRE[g]: p must not be NULL */", "    /* ordinary */",
                                 "    g(x);", "", "  /* POST[g]: frees p */"]), max_size=12))
def test_strip_only_removes_whole_annotation_lines(lines):
    kept = [ln for ln in lines if "PRE[" not in ln and "POST[" not in ln]
    assert strip_annotations("".join(ln + "\n" for ln in lines)) == "".join(ln + "\n" for ln in kept)


# -- verifier


def test_verifier_sections(corpus):
    from .snapshots import load_corpus

    _, store = load_corpus()
    graph = _graph(corpus)
    leaf = corpus.function("list_sum")
    b = render_verifier_prompt(leaf, [], annotate_callsites(leaf, graph, store), CalleeContext(()), corpus.type_ctx)
    assert "## Pre-conditions (assume these hold)\n(none)" in b.user
    assert "{alias_context}" not in b.user

    main = corpus.function("main")
    ctx = callee_context(store, main, graph, "verify")
    b = render_verifier_prompt(main, [], annotate_callsites(main, graph, store), ctx, corpus.type_ctx)
    section = b.user.split("## Callee Information\n", 1)[1]
    assert [ln for ln in section.splitlines() if ln.startswith("### ")] == [
        "### list_free", "### list_get", "### list_push", "### list_sum"
    ]
    assert '"simplified_contracts"' in b.user and '"issues"' in b.user


# -- baseline


def test_baseline_one_function(tmp_path):
    src = _write(tmp_path, "one.c", "int f(int x) { return x + 1; }\n")
    b = render_baseline_prompt(program_from_sources([src]), "no-overflow")
    assert "int f(int x) { return x + 1; }" in b.user
    assert "integer_overflow|division_by_zero|shift_ub" in b.user


def test_baseline_files_in_order(tmp_path):
    a = _write(tmp_path, "a.c", "int fa(void) { return 1; }\n")
    b = _write(tmp_path, "b.c", "int fb(void) { return 2; }\n")
    text = render_baseline_prompt(program_from_sources([a, b]), "valid-memsafety").user
    assert text.index("// file: a.c") < text.index("fa(void)") < text.index("// file: b.c") < text.index("fb(void)")


def test_baseline_over_budget(corpus):
    with pytest.raises(ContextOverflow) as err:
        render_baseline_prompt(corpus, "valid-memsafety", budget=500)
    assert err.value.budget == 500 and err.value.size > 500
    with pytest.raises(ValueError):
        render_baseline_prompt(corpus, "termination")


# -- template set


def test_template_override_changes_text_and_version(tmp_path):
    base = Templates()
    override = tmp_path / "tpl"
    override.mkdir()
    (override / "external.txt").write_text("Describe {name} as JSON.\n{schema}\n")
    custom = Templates(override)
    assert custom.version != base.version
    b = render_external_prompt("free", templates=custom)
    assert b.user.startswith("Describe free as JSON.")
    # untouched templates still come from the built-in set
    assert custom.get("alloc.single.txt") == base.get("alloc.single.txt")


def test_template_version_is_stable():
    assert Templates().version == Templates().version
    with pytest.raises(FileNotFoundError):
        Templates("/nonexistent/templates")


def test_every_template_name_is_reachable():
    t = Templates()
    names = t.names()
    for pass_ in SUMMARIZER_PASSES:
        assert f"{pass_}.single.txt" in names
        for mode in ("instructions", "source"):
            assert f"{pass_}.{mode}.system.txt" in names and f"{pass_}.{mode}.user.txt" in names
    assert all(t.has(n) for n in names)


def test_bundle_text_and_suffix():
    b = PromptBundle("u", "s", "system")
    assert b.text() == "s\n\nu"
    assert b.with_suffix("Respond with JSON only.").user == "u\n\nRespond with JSON only."


def test_rendering_is_deterministic(corpus):
    fn = corpus.function("list_free")
    blocks = split_function_blocks(fn, 60)
    first = [render_block_prompt("free", fn, blk, ["s"] * blk.index).user for blk in blocks]
    again = [render_block_prompt("free", fn, blk, ["s"] * blk.index).user for blk in blocks]
    assert first == again and len(first) > 1
