"""Run configuration: defaults < config file < environment < command-line flags."""

from __future__ import annotations

import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .driver import DriverConfig
from .extractor import DEFAULT_BLOCK_BUDGET
from .llm import ProviderConfig
from .prompts import CACHE_MODES, DEFAULT_BASELINE_BUDGET, Templates

log = logging.getLogger(__name__)

ENV_PREFIX = "NLVERIFY_"
CONFIG_ENV = "NLVERIFY_CONFIG"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    block_budget: int = DEFAULT_BLOCK_BUDGET
    fixpoint_bound: int = 3
    baseline_budget: int = DEFAULT_BASELINE_BUDGET
    store: str | None = None
    templates: str | None = None
    entry: str = "main"
    log_level: str = "WARNING"
    cache_mode: str = "none"
    callee_format: str = "annotate"
    jobs: int = 1

    def driver_config(self) -> DriverConfig:
        return DriverConfig(
            block_budget=self.block_budget,
            fixpoint_bound=self.fixpoint_bound,
            cache_mode=self.cache_mode,
            callee_format=self.callee_format,
            entry=self.entry,
            baseline_budget=self.baseline_budget,
            jobs=self.jobs,
            templates=Templates(self.templates) if self.templates else None,
        )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


_PROVIDER_KEYS = {f.name for f in dataclasses.fields(ProviderConfig)}
_RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"provider"}
# the provider kind is spelled "provider" in files, env and flags
_ALIASES = {"provider": "kind"}
# annotation strings, since annotations are postponed in both modules
_TYPES: dict[str, str] = {
    **{f.name: f.type for f in dataclasses.fields(ProviderConfig)},
    **{f.name: f.type for f in dataclasses.fields(RunConfig) if f.name != "provider"},
}
KEYS = sorted((_PROVIDER_KEYS - {"kind"}) | _RUN_KEYS | {"provider"})


def _coerce(key: str, value: Any) -> Any:
    name = _ALIASES.get(key, key)
    tp = _TYPES[name]
    if value is None:
        return None
    try:
        if tp == "int":
            if isinstance(value, bool):
                raise ValueError("expected an integer")
            return int(value)
        if tp == "float":
            if isinstance(value, bool):
                raise ValueError("expected a number")
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot read {value!r}: {exc}") from exc


def _read_file(path: Path) -> dict[str, Any]:
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from exc
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(key, "tables are not supported; use flat keys")
    return data


def _check(v: Mapping[str, Any]) -> None:
    rules = [
        ("block_budget", v["block_budget"] >= 1, "must be >= 1"),
        ("fixpoint_bound", v["fixpoint_bound"] >= 1, "must be >= 1"),
        ("baseline_budget", v["baseline_budget"] >= 1, "must be >= 1"),
        ("jobs", v["jobs"] >= 1, "must be >= 1"),
        ("cache_mode", v["cache_mode"] in CACHE_MODES, f"must be one of {CACHE_MODES}"),
        ("callee_format", v["callee_format"] in ("annotate", "flat"), "must be annotate or flat"),
        ("log_level", v["log_level"] in LOG_LEVELS, f"must be one of {LOG_LEVELS}"),
        ("entry", bool(v["entry"]), "must not be empty"),
        ("provider", v["kind"] in ("rule", "http"), "must be rule or http"),
        ("temperature", 0 <= v["temperature"] <= 2, "must be in [0, 2]"),
        ("max_retries", v["max_retries"] >= 0, "must be >= 0"),
        ("timeout", v["timeout"] > 0, "must be > 0"),
        ("max_inflight", v["max_inflight"] >= 1, "must be >= 1"),
        ("backoff_base", v["backoff_base"] >= 0, "must be >= 0"),
    ]
    for key, ok, msg in rules:
        if not ok:
            raise ConfigError(key, msg)


def load_config(
    paths: Sequence[str | Path] = (),
    env: Mapping[str, str] | None = None,
    flags: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Merge config files (later wins), NLVERIFY_* variables and flags.

    A file named by NLVERIFY_CONFIG is read before `paths`. Flags whose
    value is None count as unset.
    """
    env = dict(os.environ if env is None else env)
    layers: list[tuple[str, dict[str, Any]]] = []
    files = ([env[CONFIG_ENV]] if env.get(CONFIG_ENV) else []) + [str(p) for p in paths]
    for path in files:
        layers.append((path, _read_file(Path(path))))
    layers.append((
        "environment",
        {k[len(ENV_PREFIX):].lower(): v for k, v in env.items() if k.startswith(ENV_PREFIX) and k != CONFIG_ENV},
    ))
    layers.append(("flags", {k: v for k, v in (flags or {}).items() if v is not None}))

    merged: dict[str, Any] = {}
    for origin, layer in layers:
        for key, value in layer.items():
            if key not in KEYS:
                if origin == "environment":
                    continue  # unrelated NLVERIFY_* variables, e.g. the API key
                raise ConfigError(key, f"unknown setting (from {origin})")
            merged[key] = _coerce(key, value)

    values = {**dataclasses.asdict(ProviderConfig()), **dataclasses.asdict(RunConfig())}
    del values["provider"]
    values.update({_ALIASES.get(k, k): v for k, v in merged.items()})
    values["log_level"] = str(values["log_level"]).upper()
    _check(values)
    cfg = RunConfig(
        provider=ProviderConfig(**{k: values[k] for k in _PROVIDER_KEYS}),
        **{k: values[k] for k in _RUN_KEYS},
    )
    log.debug("effective config: %s", cfg.to_json())
    return cfg
