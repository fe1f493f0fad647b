import json
import threading
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlverify.extractor import FunctionRecord
from nlverify.llm import (
    CountingProvider,
    HttpProvider,
    JsonExtractError,
    ProviderConfig,
    ProviderError,
    RuleProvider,
    complete,
    extract_json,
    rule_provider,
)
from nlverify.prompts import PromptBundle, render_summarizer_prompt
from nlverify.summaries import CalleeContext, validate

BUNDLE = PromptBundle("hello", "sys")


def _ok(text='{"a": 1}'):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def _provider(handler, **cfg):
    cfg = ProviderConfig(kind="http", endpoint="http://mock/v1", **cfg)
    sleeps = []
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpProvider(cfg, client=client, sleep=sleeps.append, rng=lambda: 0.5), sleeps


# -- json extraction


def test_fenced_json():
    assert extract_json('```json\n{"a":1}\n```') == {"a": 1}


def test_json_inside_prose():
    assert extract_json('Here is the summary: {"a":1} hope this helps') == {"a": 1}


def test_no_json():
    with pytest.raises(JsonExtractError):
        extract_json("no json here")


def test_first_balanced_object_wins():
    assert extract_json('{"a": {"b": "}"}} and then {"c": 2}') == {"a": {"b": "}"}}


def test_repair_trailing_commas_and_controls():
    assert extract_json('{"a": [1, 2,], "b": "x\ty",}') == {"a": [1, 2], "b": "x\ty"}


def test_unbalanced_object_rejected():
    with pytest.raises(JsonExtractError):
        extract_json('{"a": {"b": 1}')


_JSON = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=10),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(max_size=5), inner, max_size=3),
    max_leaves=10,
)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.text(max_size=5), _JSON, max_size=4), st.booleans())
def test_extract_is_idempotent_on_clean_json(obj, pretty):
    text = json.dumps(obj, indent=2 if pretty else None)
    assert extract_json(text) == obj
    assert extract_json(json.dumps(extract_json(text))) == obj


# -- http client


def test_retries_after_429():
    statuses = iter([429, 429, 200])

    def handler(request):
        code = next(statuses)
        return _ok() if code == 200 else httpx.Response(code)

    p, sleeps = _provider(handler)
    res = p.complete(BUNDLE)
    assert res.attempts == 3 and res.text == '{"a": 1}'
    # base 1 s, factor 2, jitter fixed at the midpoint
    assert sleeps == [1.0, 2.0]


def test_retry_after_header_respected():
    statuses = iter([503, 200])

    def handler(request):
        return _ok() if next(statuses) == 200 else httpx.Response(503, headers={"retry-after": "7"})

    p, sleeps = _provider(handler)
    assert p.complete(BUNDLE).attempts == 2
    assert sleeps == [7.0]


def test_client_error_is_not_retried():
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(401, text="bad key")

    p, _ = _provider(handler)
    with pytest.raises(ProviderError, match="HTTP 401"):
        p.complete(BUNDLE)
    assert len(calls) == 1


def test_gives_up_after_max_retries():
    p, sleeps = _provider(lambda r: httpx.Response(500), max_retries=2)
    with pytest.raises(ProviderError, match="3 attempts"):
        p.complete(BUNDLE)
    assert len(sleeps) == 2


def test_wire_format(monkeypatch):
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return _ok("done")

    monkeypatch.setenv("TEST_KEY", "secret")
    p, _ = _provider(handler, model="m1", api_key_env="TEST_KEY", temperature=0.3)
    res = p.complete(BUNDLE)
    assert seen["url"] == "http://mock/v1/chat/completions"
    assert seen["auth"] == "Bearer secret"
    assert seen["body"] == {
        "model": "m1",
        "temperature": 0.3,
        "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "hello"}],
    }
    assert (res.prompt_chars, res.completion_chars) == (8, 4)


def test_malformed_response_body():
    p, _ = _provider(lambda r: httpx.Response(200, json={"choices": []}))
    with pytest.raises(ProviderError, match="malformed"):
        p.complete(BUNDLE)


def test_unreachable_endpoint():
    cfg = ProviderConfig(kind="http", endpoint="http://127.0.0.1:9/v1", max_retries=0, timeout=2)
    with pytest.raises(ProviderError):
        complete(cfg, BUNDLE)


def test_inflight_bound():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return _ok()

    p, _ = _provider(handler, max_inflight=3)
    threads = [threading.Thread(target=p.complete, args=(BUNDLE,)) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["peak"] == 3


@pytest.mark.parametrize("bad", [{"max_retries": -1}, {"timeout": 0}, {"max_inflight": 0}, {"kind": "grpc"}])
def test_config_ranges(bad):
    with pytest.raises(ValueError):
        ProviderConfig(**bad)


# -- rule provider


def _fn(name, params, body):
    sig = f"void {name}({', '.join(f'{t} {n}' for n, t in params)})"
    text = f"{sig}\n{{\n{body}}}"
    return FunctionRecord(name, sig, tuple(params), "t.c", (1, text.count("\n") + 1), text)


def test_rule_alloc_example():
    fn = _fn("f", [("n", "int")], "    char *p;\n    p = malloc(n);\n")
    out = extract_json(rule_provider(render_summarizer_prompt("alloc", fn, CalleeContext(()))))
    rec = validate("alloc", out)
    (a,) = rec.allocations
    assert (a.type, a.source, a.size_expr, a.returned, a.stored_to, a.may_be_null) == (
        "heap", "malloc", "n", False, "p", True
    )


def test_rule_memsafe_example():
    fn = _fn("g", [("q", "int *")], "    *q = 0;\n")
    rec = validate("memsafe", extract_json(rule_provider(render_summarizer_prompt("memsafe", fn, CalleeContext(())))))
    assert [(c.target, c.contract_kind) for c in rec.contracts] == [("q", "disallow_null")]


def test_rule_free_of_parameter_needs_not_freed():
    fn = _fn("g", [("q", "int *")], "    free(q);\n")
    rec = validate("memsafe", extract_json(rule_provider(render_summarizer_prompt("memsafe", fn, CalleeContext(())))))
    assert ("q", "not_freed") in [(c.target, c.contract_kind) for c in rec.contracts]


def test_rule_provider_is_deterministic(corpus):
    for fn in corpus.functions:
        bundle = render_summarizer_prompt("free", fn, CalleeContext(()))
        assert RuleProvider().complete(bundle).text == RuleProvider().complete(bundle).text
        assert RuleProvider().complete(bundle).attempts == 1


def test_counting_provider_records_meta():
    fn = _fn("g", [("q", "int *")], "    *q = 0;\n")
    counter = CountingProvider(RuleProvider())
    counter.complete(render_summarizer_prompt("memsafe", fn, CalleeContext(())))
    assert counter.count == 1 and counter.order("memsafe") == ["t.c::g"] and counter.order("alloc") == []
