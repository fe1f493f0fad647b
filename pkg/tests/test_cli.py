import json
import logging
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlverify.cli import COMMANDS, dispatch
from nlverify.config import ConfigError, RunConfig, load_config

# -- configuration


def test_defaults():
    cfg = load_config(env={})
    assert cfg == RunConfig()
    assert (cfg.fixpoint_bound, cfg.baseline_budget, cfg.provider.kind, cfg.provider.temperature) == (3, 120_000, "rule", 0.0)


def test_flag_beats_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("block_budget = 10000\nfixpoint_bound = 4\n")
    cfg = load_config([path], env={}, flags={"block_budget": 5000})
    assert cfg.block_budget == 5000 and cfg.fixpoint_bound == 4


def test_layer_order(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("jobs = 2\nmodel = 'from-file'\ntimeout = 30\n")
    env = {"NLVERIFY_JOBS": "3", "NLVERIFY_MODEL": "from-env", "NLVERIFY_API_KEY": "not a setting"}
    cfg = load_config([path], env=env, flags={"jobs": 4, "model": None})
    # flags > env > file > defaults; None flags are unset
    assert (cfg.jobs, cfg.provider.model, cfg.provider.timeout) == (4, "from-env", 30.0)


def test_config_path_from_environment(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("provider = 'http'\nendpoint = 'http://example.invalid/v1'\n")
    cfg = load_config(env={"NLVERIFY_CONFIG": str(path)})
    assert cfg.provider.kind == "http" and cfg.provider.endpoint == "http://example.invalid/v1"


@pytest.mark.parametrize("flags,key", [
    ({"fixpoint_bound": -1}, "fixpoint_bound"),
    ({"max_inflight": 0}, "max_inflight"),
    ({"timeout": 0}, "timeout"),
    ({"cache_mode": "always"}, "cache_mode"),
    ({"provider": "grpc"}, "provider"),
    ({"block_budget": "many"}, "block_budget"),
    ({"colour": "blue"}, "colour"),
])
def test_bad_values_name_the_key(flags, key):
    with pytest.raises(ConfigError) as err:
        load_config(env={}, flags=flags)
    assert err.value.key == key


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config([tmp_path / "missing.toml"], env={})
    nested = tmp_path / "nested.toml"
    nested.write_text("[provider]\nmodel = 'x'\n")
    with pytest.raises(ConfigError, match="tables are not supported"):
        load_config([nested], env={})


def test_effective_config_logged(caplog):
    with caplog.at_level(logging.DEBUG, logger="nlverify.config"):
        load_config(env={}, flags={"jobs": 2})
    assert "effective config" in caplog.text and "'jobs': 2" in caplog.text


_SETTINGS = st.fixed_dictionaries({}, optional={
    "jobs": st.integers(1, 8),
    "block_budget": st.integers(1, 50_000),
    "model": st.text(st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=6),
    "temperature": st.floats(0, 2),
})


@settings(max_examples=50, deadline=None)
@given(_SETTINGS, _SETTINGS)
def test_config_is_deterministic(env_part, flags):
    env = {f"NLVERIFY_{k.upper()}": str(v) for k, v in env_part.items()}
    assert load_config(env=env, flags=flags) == load_config(env=dict(env), flags=dict(flags))


# -- dispatch


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_subcommand_help(command, capsys):
    assert dispatch([command, "--help"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("usage:") and command in out


def test_unknown_subcommand(capsys):
    assert dispatch(["frobnicate"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_no_subcommand():
    assert dispatch([]) == 2


def test_extract_json(fixtures_dir, capsys):
    assert dispatch(["extract", str(fixtures_dir / "corpus" / "list.c")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [f["name"] for f in doc["functions"]] == ["node_new", "list_push", "list_get", "list_sum", "list_free", "main"]
    assert doc["order"][0] == {"scc": ["ext::free"], "recursive": False}
    assert doc["type_context"]["macros"] == {"MAX_ITEMS": "16"}


def test_extract_from_compile_commands(tmp_path, fixtures_dir, capsys):
    src = fixtures_dir / "double_free" / "buggy.c"
    db = tmp_path / "compile_commands.json"
    db.write_text(json.dumps([{"directory": str(src.parent), "file": src.name, "arguments": ["cc", "-c", src.name]}]))
    assert dispatch(["extract", "-p", str(tmp_path)]) == 0
    assert {f["name"] for f in json.loads(capsys.readouterr().out)["functions"]} == {"release", "main"}


def test_missing_source_is_environment_error(tmp_path):
    assert dispatch(["extract", str(tmp_path / "nope.c")]) == 3
    assert dispatch(["extract", "-p", str(tmp_path)]) == 3


def test_no_inputs_is_usage_error():
    assert dispatch(["extract"]) == 2


def test_analyze_and_fail_on_issue(fixtures_dir, tmp_path, capsys):
    buggy = str(fixtures_dir / "double_free" / "buggy.c")
    store = str(tmp_path / "s.jsonl")
    assert dispatch(["analyze", buggy, "--property", "valid-memsafety", "--store", store]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["verdict"] == "FALSE" and report["provider_calls"] > 0
    assert dispatch(["analyze", buggy, "--property", "valid-memsafety", "--store", store, "--fail-on-issue"]) == 1
    assert json.loads(capsys.readouterr().out)["provider_calls"] == 0


def test_analyze_writes_out_file(fixtures_dir, tmp_path):
    out = tmp_path / "report.json"
    fixed = str(fixtures_dir / "double_free" / "fixed.c")
    assert dispatch(["analyze", fixed, "--property", "valid-memsafety", "--fail-on-issue", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["verdict"] == "TRUE"


def test_baseline_mode(fixtures_dir, capsys):
    buggy = str(fixtures_dir / "double_free" / "buggy.c")
    assert dispatch(["analyze", buggy, "--property", "valid-memsafety", "--mode", "baseline"]) == 0
    assert json.loads(capsys.readouterr().out)["mode"] == "baseline"


def test_unreachable_endpoint(fixtures_dir, capsys):
    argv = ["analyze", str(fixtures_dir / "corpus" / "list.c"), "--property", "no-overflow",
            "--provider", "http", "--endpoint", "http://127.0.0.1:9/v1", "--max-retries", "0", "--timeout", "2"]
    assert dispatch(argv) == 3
    assert "provider request(s) failed" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error(fixtures_dir, capsys):
    argv = ["analyze", str(fixtures_dir / "corpus" / "list.c"), "--property", "no-overflow", "--fixpoint-bound", "-2"]
    assert dispatch(argv) == 2
    assert "fixpoint_bound" in capsys.readouterr().err


def test_unwritable_store(fixtures_dir, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    argv = ["analyze", str(fixtures_dir / "corpus" / "list.c"), "--property", "no-overflow",
            "--store", str(blocker / "s.jsonl")]
    assert dispatch(argv) == 3


def test_verify_filters_by_function(fixtures_dir, capsys):
    buggy = str(fixtures_dir / "double_free" / "buggy.c")
    assert dispatch(["verify", buggy, "--function", "release", "--fail-on-issue"]) == 0
    assert json.loads(capsys.readouterr().out)["issues"] == []
    assert dispatch(["verify", buggy, "--function", "main", "--fail-on-issue"]) == 1


def test_show_summary(fixtures_dir, capsys):
    store = str(fixtures_dir / "corpus" / "summaries.jsonl")
    assert dispatch(["show-summary", "list_push", "alloc", "--store", store]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert list(doc) == ["list.c::list_push"] and list(doc["list.c::list_push"]) == ["alloc"]
    assert dispatch(["show-summary", "list.c::main", "--store", store]) == 0
    assert set(json.loads(capsys.readouterr().out)["list.c::main"]) >= {"verify", "leak", "int"}
    assert dispatch(["show-summary", "nobody", "--store", store]) == 1


def test_show_summary_missing_store(tmp_path):
    assert dispatch(["show-summary", "main", "--store", str(tmp_path / "none.jsonl")]) == 3


def test_bench_rule_provider(fixtures_dir, capsys):
    assert dispatch(["bench", "--tasks", str(fixtures_dir / "bench"), "--provider", "rule"]) == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert sum(r["TP"] + r["FP"] + r["TN"] + r["FN"] + r["UNK"] for r in rows) == 12


def test_bench_both_modes_and_table(fixtures_dir, tmp_path, capsys):
    argv = ["bench", "--tasks", str(fixtures_dir / "bench"), "--subset", "juliet", "--mode", "both",
            "--format", "table", "--store-dir", str(tmp_path / "stores"), "--jobs", "2"]
    assert dispatch(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[1] for ln in lines[2:]] == ["rule/baseline", "rule/compositional"]
    assert len(list((tmp_path / "stores" / "compositional").glob("*.jsonl"))) == 3


def test_bench_imported(fixtures_dir, capsys):
    argv = ["bench", "--tasks", str(fixtures_dir / "bench"), "--import-verdicts",
            str(fixtures_dir / "bench" / "imported.csv"), "--tool", "other"]
    assert dispatch(argv) == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert {r["tool"] for r in rows} == {"other"}


def test_bench_missing_root(tmp_path):
    assert dispatch(["bench", "--tasks", str(tmp_path / "none")]) == 3


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "nlverify.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for command in COMMANDS:
        assert command in proc.stdout
