"""Completion providers and JSON extraction from raw completions."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import httpx

from .prompts import PromptBundle

log = logging.getLogger(__name__)

JSON_ONLY_SUFFIX = "Respond with JSON only."


class ProviderError(RuntimeError):
    pass


class JsonExtractError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "rule"  # "rule" | "http"
    endpoint: str = "http://localhost:8000/v1"
    model: str = "default"
    api_key_env: str = "NLVERIFY_API_KEY"
    temperature: float = 0.0
    max_retries: int = 4
    timeout: float = 120.0
    max_inflight: int = 4
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rule", "http"):
            raise ValueError(f"provider kind must be rule or http, got {self.kind!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        if self.backoff_base < 0:
            raise ValueError("backoff_base must be >= 0")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_chars: int
    completion_chars: int
    attempts: int = 1


class Provider(Protocol):
    def complete(self, bundle: PromptBundle) -> CompletionResult: ...


def _prompt_chars(bundle: PromptBundle) -> int:
    return len(bundle.user) + len(bundle.system or "")


class HttpProvider:
    """OpenAI-compatible chat completions client with retry and an in-flight cap."""

    def __init__(
        self,
        cfg: ProviderConfig,
        *,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: Callable[[], float] = random.random,
    ):
        self.cfg = cfg
        self._client = client or httpx.Client()
        self._sleep = sleep
        self._rng = rng
        self._slots = threading.BoundedSemaphore(cfg.max_inflight)

    def _delay(self, attempt: int, retry_after: str | None) -> float:
        delay = self.cfg.backoff_base * 2**attempt * (0.5 + self._rng())
        if retry_after:
            try:
                delay = max(delay, float(retry_after))
            except ValueError:
                pass
        return delay

    def complete(self, bundle: PromptBundle) -> CompletionResult:
        cfg = self.cfg
        url = cfg.endpoint.rstrip("/") + "/chat/completions"
        headers = {}
        token = os.environ.get(cfg.api_key_env) if cfg.api_key_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {"model": cfg.model, "messages": bundle.messages(), "temperature": cfg.temperature}

        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            retry_after = None
            try:
                with self._slots:
                    resp = self._client.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                    retry_after = resp.headers.get("retry-after")
                elif resp.status_code >= 400:
                    raise ProviderError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                else:
                    try:
                        text = resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise ProviderError(f"malformed response from {url}: {exc}") from exc
                    if not isinstance(text, str):
                        raise ProviderError(f"malformed response from {url}: content is not text")
                    return CompletionResult(text, _prompt_chars(bundle), len(text), attempt + 1)
            log.info("attempt %d/%d failed: %s", attempt + 1, cfg.max_retries + 1, last)
            if attempt < cfg.max_retries:
                self._sleep(self._delay(attempt, retry_after))
        raise ProviderError(f"{url}: giving up after {cfg.max_retries + 1} attempts ({last})")

    def close(self):
        self._client.close()


class RuleProvider:
    """Deterministic lexical oracle; see `nlverify.rules`."""

    def complete(self, bundle: PromptBundle) -> CompletionResult:
        text = rule_provider(bundle)
        return CompletionResult(text, _prompt_chars(bundle), len(text), 1)


def rule_provider(bundle: PromptBundle) -> str:
    from .rules import respond

    return json.dumps(respond(bundle.text()), indent=2)


@dataclass
class CountingProvider:
    """Wraps a provider and records every call (thread-safe)."""

    inner: Any
    calls: list[dict] = field(default_factory=list)
    errors: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def complete(self, bundle: PromptBundle) -> CompletionResult:
        with self._lock:
            self.calls.append(dict(bundle.meta))
        try:
            return self.inner.complete(bundle)
        except ProviderError:
            with self._lock:
                self.errors += 1
            raise

    @property
    def count(self) -> int:
        return len(self.calls)

    def order(self, pass_: str | None = None) -> list[str]:
        return [c.get("function") for c in self.calls if pass_ is None or c.get("pass") == pass_]


def make_provider(cfg: ProviderConfig) -> Provider:
    return HttpProvider(cfg) if cfg.kind == "http" else RuleProvider()


def complete(cfg: ProviderConfig, bundle: PromptBundle) -> CompletionResult:
    provider = make_provider(cfg)
    try:
        return provider.complete(bundle)
    finally:
        if isinstance(provider, HttpProvider):
            provider.close()


# --------------------------------------------------------------------------
# JSON extraction

_FENCE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n(.*?)```", re.S)
_TRAILING_COMMA = re.compile(r",(\s*[}\]])")


def _balanced_object(text: str) -> str | None:
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        esc = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        # unbalanced from here; no later start can close either
        return None
    return None


def _escape_controls(text: str) -> str:
    out = []
    in_str = False
    esc = False
    for ch in text:
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            elif ord(ch) < 0x20:
                out.append(json.dumps(ch)[1:-1])
                continue
        elif ch == '"':
            in_str = True
        out.append(ch)
    return "".join(out)


def _repair(text: str) -> str:
    return _TRAILING_COMMA.sub(r"\1", _escape_controls(text))


def extract_json(text: str) -> Any:
    """First balanced JSON object in `text`, after fences and prose are dropped."""
    candidates = [m[1] for m in _FENCE.finditer(text)] + [text]
    for cand in candidates:
        obj = _balanced_object(cand)
        if obj is None:
            continue
        for attempt in (obj, _repair(obj)):
            try:
                return json.loads(attempt)
            except json.JSONDecodeError:
                continue
    raise JsonExtractError(f"no parseable JSON object in completion ({len(text)} chars)")
