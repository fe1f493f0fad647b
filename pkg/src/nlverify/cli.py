"""Command-line entry point: extract, analyze, verify, bench, show-summary."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import harness
from .callgraph import build_call_graph, compute_analysis_order, load_lib_attrs
from .config import ConfigError, RunConfig, load_config
from .driver import FATAL_SEVERITIES, PASS_PLANS, run_property
from .extractor import ExtractionError, Program, extract_program, load_compilation_db, program_from_sources
from .llm import HttpProvider, RuleProvider
from .summaries import PASSES, StoreIO, SummaryStore, serialize

log = logging.getLogger("nlverify")

EXIT_OK, EXIT_ISSUE, EXIT_USAGE, EXIT_ENV = 0, 1, 2, 3

# flag dest -> config key
_CONFIG_FLAGS = {
    "provider": "provider",
    "endpoint": "endpoint",
    "model": "model",
    "api_key_env": "api_key_env",
    "temperature": "temperature",
    "max_retries": "max_retries",
    "timeout": "timeout",
    "max_inflight": "max_inflight",
    "block_budget": "block_budget",
    "fixpoint_bound": "fixpoint_bound",
    "baseline_budget": "baseline_budget",
    "store": "store",
    "templates": "templates",
    "entry": "entry",
    "log_level": "log_level",
    "cache_mode": "cache_mode",
    "callee_format": "callee_format",
    "jobs": "jobs",
}


class EnvironmentFailure(RuntimeError):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", action="append", default=[], metavar="PATH", help="TOML config file (repeatable)")
    g.add_argument("--provider", choices=("rule", "http"))
    g.add_argument("--endpoint", help="base URL of an OpenAI-compatible API")
    g.add_argument("--model")
    g.add_argument("--api-key-env", metavar="VAR", help="environment variable holding the bearer token")
    g.add_argument("--temperature", type=float)
    g.add_argument("--max-retries", type=int)
    g.add_argument("--timeout", type=float, help="seconds per request")
    g.add_argument("--max-inflight", type=int)
    g.add_argument("--block-budget", type=int, metavar="CHARS")
    g.add_argument("--fixpoint-bound", type=int)
    g.add_argument("--baseline-budget", type=int, metavar="CHARS")
    g.add_argument("--templates", metavar="DIR", help="directory overriding built-in prompt templates")
    g.add_argument("--cache-mode", choices=("none", "instructions", "source"))
    g.add_argument("--callee-format", choices=("annotate", "flat"))
    g.add_argument("--jobs", type=int)
    g.add_argument("--log-level", type=str.upper, choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return p


def _inputs() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("input")
    g.add_argument("sources", nargs="*", help="C source files (when no compilation database is given)")
    g.add_argument("-p", "--compdb", "--compile-commands", dest="compile_commands", metavar="PATH",
                   help="compile_commands.json or its directory")
    g.add_argument("--preprocess", nargs="?", const="on", default="off", choices=("on", "off"),
                   help="analyze macro-expanded bodies (runs the compiler with -E)")
    g.add_argument("--libattrs", metavar="PATH", help="JSON map of library function names to attribute tags")
    g.add_argument("--out", metavar="PATH", help="write the JSON result here instead of stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    common, inputs = _common(), _inputs()
    parser = argparse.ArgumentParser(prog="nlverify", description="Compositional memory-safety checking of C programs.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    sub.add_parser("extract", parents=[common, inputs], help="dump functions, callsites and the call graph")

    analyze = sub.add_parser("analyze", parents=[common, inputs], help="check one property of a program")
    analyze.add_argument("--property", choices=sorted(PASS_PLANS), default="valid-memsafety")
    analyze.add_argument("--mode", choices=("compositional", "baseline"), default="compositional")
    analyze.add_argument("--store", metavar="PATH", help="JSONL summary store (reused across runs)")
    analyze.add_argument("--entry", metavar="NAME", help="entry function for leak verdicts")
    analyze.add_argument("--fail-on-issue", action="store_true", help="exit 1 when the verdict is FALSE")

    verify = sub.add_parser("verify", parents=[common, inputs], help="memory-safety issues, optionally of one function")
    verify.add_argument("--store", metavar="PATH")
    verify.add_argument("--function", metavar="NAME", help="only report issues found in this function")
    verify.add_argument("--fail-on-issue", action="store_true")

    bench = sub.add_parser("bench", parents=[common], help="run or import verdicts over benchmark tasks")
    bench.add_argument("--tasks", required=True, metavar="ROOT", help="directory of task .yml files")
    bench.add_argument("--subset", default="all", choices=("all",) + harness.CATEGORIES)
    bench.add_argument("--categories", metavar="PATH", help="category mapping JSON")
    bench.add_argument("--mode", choices=("compositional", "baseline", "both"), default="compositional")
    bench.add_argument("--import-verdicts", metavar="CSV", help="judge (task id, verdict) rows instead of running")
    bench.add_argument("--tool", default="", help="tool label in the report")
    bench.add_argument("--store-dir", metavar="DIR", help="keep one summary store per task here")
    bench.add_argument("--format", choices=("json", "table"), default="json")
    bench.add_argument("--out", metavar="PATH")

    show = sub.add_parser("show-summary", parents=[common], help="print stored summaries of a function")
    show.add_argument("function", help="function name or key (file::name)")
    show.add_argument("--store", required=True, metavar="PATH")
    show.add_argument("pass_pos", nargs="?", choices=PASSES, metavar="PASS", help="only this pass")
    show.add_argument("--pass", dest="pass_", choices=PASSES, help="same as the PASS argument")
    return parser


def _flags(args: argparse.Namespace) -> dict:
    return {key: getattr(args, dest, None) for dest, key in _CONFIG_FLAGS.items()}


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + ("" if text.endswith("\n") else "\n"))
    else:
        sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))


def _load_program(args: argparse.Namespace, cfg: RunConfig) -> Program:
    if args.compile_commands:
        db = Path(args.compile_commands)
        if db.is_dir():
            db = db / "compile_commands.json"
        try:
            commands = load_compilation_db(db)
        except FileNotFoundError as exc:
            raise EnvironmentFailure(f"compilation database not found: {db}") from exc
        return extract_program(commands, preprocess=args.preprocess == "on", jobs=cfg.jobs)
    if not args.sources:
        raise ValueError("give C source files or --compile-commands")
    missing = [s for s in args.sources if not Path(s).is_file()]
    if missing:
        raise EnvironmentFailure(f"source file not found: {missing[0]}")
    return program_from_sources(args.sources, preprocess=args.preprocess == "on")


def _provider(cfg: RunConfig):
    return HttpProvider(cfg.provider) if cfg.provider.kind == "http" else RuleProvider()


def _open_store(path: str | None, must_exist: bool = False) -> SummaryStore:
    if path and must_exist and not Path(path).is_file():
        raise EnvironmentFailure(f"store not found: {path}")
    try:
        return SummaryStore(path)
    except StoreIO as exc:
        raise EnvironmentFailure(str(exc)) from exc


def cmd_extract(args, cfg: RunConfig) -> int:
    program = _load_program(args, cfg)
    graph = build_call_graph(program.functions, program.callsites, load_lib_attrs(args.libattrs))
    order = compute_analysis_order(graph)
    doc = {
        "functions": [
            {
                "key": f.key, "name": f.name, "signature": f.signature, "file": f.file_path,
                "line_span": list(f.line_span), "params": [list(p) for p in f.params],
            }
            for f in program.functions
        ],
        "callsites": [
            {
                "caller": s.caller_key, "callee": s.callee_name, "args": list(s.arg_exprs),
                "line": s.line, "indirect": s.is_indirect,
            }
            for s in program.callsites
        ],
        "edges": sorted(list(e) for e in graph.edges),
        "order": [{"scc": list(c), "recursive": r} for c, r in order],
        "skipped_files": [list(s) for s in program.skipped_files],
        "type_context": program.type_ctx.to_json(),
    }
    _emit(json.dumps(doc, indent=2), args.out)
    return EXIT_OK


def _analyze(args, cfg: RunConfig, property_: str, mode: str):
    program = _load_program(args, cfg)
    store = _open_store(cfg.store)
    provider = _provider(cfg)
    try:
        report = run_property(
            program, property_, mode, cfg.driver_config(),
            provider=provider, store=store, program_id=_program_id(args), lib_attrs=load_lib_attrs(args.libattrs),
        )
    finally:
        store.close()
        if isinstance(provider, HttpProvider):
            provider.close()
    return report


def _program_id(args) -> str:
    return args.compile_commands or ",".join(args.sources)


def _exit_for(report, fail_on_issue: bool, issues=None) -> int:
    if report.provider_errors:
        print(f"nlverify: {report.provider_errors} provider request(s) failed; see failed_functions", file=sys.stderr)
        return EXIT_ENV
    issues = report.issues if issues is None else issues
    if fail_on_issue and any(i.severity in FATAL_SEVERITIES for i in issues):
        return EXIT_ISSUE
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    report = _analyze(args, cfg, args.property, args.mode)
    _emit(json.dumps(report.to_json(), indent=2), args.out)
    return _exit_for(report, args.fail_on_issue)


def cmd_verify(args, cfg: RunConfig) -> int:
    report = _analyze(args, cfg, "valid-memsafety", "compositional")
    issues = [i for i in report.issues if args.function is None or i.function == args.function]
    doc = {
        "verdict": report.verdict,
        "issues": [serialize(i) for i in issues],
        "failed_functions": [f.to_json() for f in report.failed_functions],
    }
    _emit(json.dumps(doc, indent=2), args.out)
    return _exit_for(report, args.fail_on_issue, issues)


def cmd_bench(args, cfg: RunConfig) -> int:
    try:
        categories = harness.load_categories(args.categories) if args.categories else None
        tasks = harness.load_tasks(args.tasks, args.subset, categories)
    except FileNotFoundError as exc:
        raise EnvironmentFailure(str(exc)) from exc
    if args.import_verdicts:
        outcomes = harness.judge_imported(tasks, harness.import_verdicts(args.import_verdicts), args.tool or "imported")
        _emit(harness.emit_report(outcomes, args.format), args.out)
        return EXIT_OK
    modes = ("compositional", "baseline") if args.mode == "both" else (args.mode,)
    outcomes, errors = [], 0
    drv = cfg.driver_config()
    for mode in modes:
        label = f"{args.tool or cfg.provider.kind}/{mode}"
        results = harness.bench(
            tasks, mode, lambda: _provider(cfg), drv, jobs=cfg.jobs,
            store_dir=Path(args.store_dir) / mode if args.store_dir else None, tool=label,
        )
        outcomes.extend(r.outcome for r in results)
        errors += sum(r.report.provider_errors for r in results)
    _emit(harness.emit_report(outcomes, args.format), args.out)
    if errors:
        print(f"nlverify: {errors} provider request(s) failed", file=sys.stderr)
        return EXIT_ENV
    return EXIT_OK


def cmd_show_summary(args, cfg: RunConfig) -> int:
    store = _open_store(args.store, must_exist=True)
    try:
        keys = [k for k in store.functions() if k == args.function or k.split("::")[-1] == args.function]
        wanted = args.pass_ or args.pass_pos
        passes = [wanted] if wanted else list(PASSES)
        doc = {}
        for key in keys:
            recs = {p: serialize(r) for p in passes if (r := store.latest(key, p)) is not None}
            if recs:
                doc[key] = recs
    finally:
        store.close()
    if not doc:
        print(f"nlverify: no summaries for {args.function!r} in {args.store}", file=sys.stderr)
        return EXIT_ISSUE
    _emit(json.dumps(doc, indent=2), None)
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "show-summary": cmd_show_summary,
}


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config, flags=_flags(args))
    except ConfigError as exc:
        print(f"nlverify: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=cfg.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.debug("effective config: %s", json.dumps(cfg.to_json(), sort_keys=True))
    try:
        return COMMANDS[args.command](args, cfg)
    except (ValueError, ConfigError) as exc:
        print(f"nlverify: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EnvironmentFailure, ExtractionError, StoreIO, OSError) as exc:
        print(f"nlverify: {exc}", file=sys.stderr)
        return EXIT_ENV


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
