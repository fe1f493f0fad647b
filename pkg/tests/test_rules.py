import pytest

from nlverify.extractor import Block
from nlverify.prompts import (
    BLOCK_PASSES,
    CACHE_MODES,
    PROPERTIES,
    SUMMARIZER_PASSES,
    AnnotatedSource,
    render_baseline_prompt,
    render_block_prompt,
    render_external_prompt,
    render_merge_prompt,
    render_summarizer_prompt,
    render_verifier_prompt,
)
from nlverify.rules import _derefs, param_names, prompt_kind, respond
from nlverify.summaries import CalleeContext, validate

from .helpers import make_function

FN = make_function("    return x;\n")
NO_CALLEES = CalleeContext(())


@pytest.mark.parametrize("pass_", SUMMARIZER_PASSES)
@pytest.mark.parametrize("mode", CACHE_MODES)
def test_summary_prompts_recognised(pass_, mode):
    assert prompt_kind(render_summarizer_prompt(pass_, FN, NO_CALLEES, cache_mode=mode).text()) == ("summary", pass_)


@pytest.mark.parametrize("pass_", BLOCK_PASSES)
def test_block_and_merge_prompts_recognised(pass_):
    block = render_block_prompt(pass_, FN, Block("f", 0, "x;\n", "statement"), [])
    assert prompt_kind(block.text()) == ("block", pass_)
    merge = render_merge_prompt(pass_, FN, ['{"summary": "s"}'], NO_CALLEES)
    assert prompt_kind(merge.text()) == ("merge", pass_)


def test_other_prompts_recognised(corpus):
    verify = render_verifier_prompt(FN, [], AnnotatedSource(FN.body), NO_CALLEES)
    assert prompt_kind(verify.text()) == ("summary", "verify")
    assert prompt_kind(render_external_prompt("free").text()) == ("external", "external")
    for prop in PROPERTIES:
        assert prompt_kind(render_baseline_prompt(corpus, prop).text()) == ("baseline", "baseline")
    assert prompt_kind("hello") == ("unknown", "unknown")


@pytest.mark.parametrize("pass_", BLOCK_PASSES)
def test_merge_answers_validate(pass_):
    answer = respond(render_merge_prompt(pass_, FN, ['{"summary": "s"}'], NO_CALLEES).text())
    validate(pass_, answer)


@pytest.mark.parametrize("name", ["malloc", "free", "memcpy", "strlen", "exit", "fopen", "no_such_function"])
def test_external_answers_validate(name):
    validate("external", respond(render_external_prompt(name).text()))


@pytest.mark.parametrize("signature,names", [
    ("void f(void)", []),
    ("int main(int argc, char **argv)", ["argc", "argv"]),
    ("void g(int (*cb)(int), const char buf[16])", ["cb", "buf"]),
    ("void h(int n, ...)", ["n"]),
])
def test_param_names(signature, names):
    assert param_names(signature) == names


@pytest.mark.parametrize("line,hit", [
    ("*p = 1;", True),
    ("return *p;", True),
    ("x = (*p);", True),
    ("p->next = 0;", True),
    ("p[3] = 0;", True),
    ("x = a * p;", False),
    ("x = a[i] * p;", False),
    ("q = p;", False),
    ("pp->x = 1;", False),
])
def test_dereference_rule(line, hit):
    assert _derefs(line, "p") == hit
