"""Benchmark tasks, judging, scoring and report rendering."""

from __future__ import annotations

import csv
import fnmatch
import json
import logging
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import yaml

from .driver import PASS_PLANS, DriverConfig, FailedFunction, VerificationReport, run_property
from .extractor import ExtractionError, program_from_sources
from .summaries import SummaryStore

log = logging.getLogger(__name__)

CATEGORIES = ("juliet", "data_structure", "control_flow", "array", "linked_list", "other")
SUPPORTED_PROPERTIES = tuple(PASS_PLANS)
OUTCOME_CLASSES = ("TP", "FP", "TN", "FN", "UNK")
WEIGHTS = {"tp": 1, "tn": 2, "fp": -16, "fn": -32, "unk": 0}


class MalformedTask(ValueError):
    pass


@dataclass(frozen=True)
class BenchTask:
    id: str
    input_files: tuple[str, ...]
    property: str
    expected_verdict: bool  # True: the property holds
    category: str = "other"

    def __post_init__(self):
        if self.property not in SUPPORTED_PROPERTIES:
            raise MalformedTask(f"{self.id}: unsupported property {self.property!r}")
        if self.category not in CATEGORIES:
            raise MalformedTask(f"{self.id}: unknown category {self.category!r}")

    @property
    def bug_present(self) -> bool:
        return not self.expected_verdict


@dataclass(frozen=True)
class Outcome:
    task_id: str
    cls: str
    bug_present: bool
    tool: str = ""
    property: str = ""
    category: str = "other"

    def __post_init__(self):
        if self.cls not in OUTCOME_CLASSES:
            raise ValueError(f"bad outcome class {self.cls!r}")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    unk: int = 0
    # UNK outcomes on bug-present tasks, needed for exact recall
    unk_pos: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn", "unk", "unk_pos"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.unk_pos > self.unk:
            raise ValueError("unk_pos cannot exceed unk")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn + self.unk

    def add(self, outcome: Outcome) -> None:
        name = outcome.cls.lower()
        setattr(self, name, getattr(self, name) + 1)
        if outcome.cls == "UNK" and outcome.bug_present:
            self.unk_pos += 1


def svcomp_score(c: ConfusionCounts) -> int:
    return c.tp * WEIGHTS["tp"] + c.tn * WEIGHTS["tn"] + c.fp * WEIGHTS["fp"] + c.fn * WEIGHTS["fn"]


def metrics(c: ConfusionCounts) -> tuple[float | None, float | None, float | None]:
    """(accuracy, precision, recall); UNK counts against accuracy and recall."""
    accuracy = (c.tp + c.tn) / c.total if c.total else None
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    positives = c.tp + c.fn + c.unk_pos
    recall = c.tp / positives if positives else None
    return accuracy, precision, recall


def judge(report: VerificationReport, task: BenchTask) -> Outcome:
    if report.program != task.id:
        raise ValueError(f"report for {report.program!r} judged against task {task.id!r}")
    return judge_verdict(report.verdict, task, tool=report.mode)


def judge_verdict(verdict: str, task: BenchTask, tool: str = "") -> Outcome:
    v = verdict.upper()
    if v == "FALSE":
        cls = "TP" if task.bug_present else "FP"
    elif v == "TRUE":
        cls = "FN" if task.bug_present else "TN"
    elif v == "UNKNOWN":
        cls = "UNK"
    else:
        raise ValueError(f"unknown verdict {verdict!r}")
    return Outcome(task.id, cls, task.bug_present, tool, task.property, task.category)


# --------------------------------------------------------------------------
# task loading


def load_categories(path: str | Path | None = None) -> dict[str, list[str]]:
    if path is None:
        text = resources.files("nlverify").joinpath("data/categories.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    bad = set(raw) - set(CATEGORIES)
    if bad:
        raise ValueError(f"unknown categories in mapping: {sorted(bad)}")
    return raw


def categorize(yml: Path, categories: Mapping[str, Sequence[str]]) -> str:
    rel = f"{yml.parent.name}/{yml.name}"
    for cat, patterns in categories.items():
        if any(fnmatch.fnmatch(rel.lower(), pat.lower()) for pat in patterns):
            return cat
    return "other"


def _property_tag(prp: str) -> str:
    name = Path(prp).name
    return name[: -len(".prp")] if name.endswith(".prp") else name


def parse_task_file(yml: Path, root: Path, categories: Mapping[str, Sequence[str]]) -> list[BenchTask]:
    try:
        doc = yaml.safe_load(yml.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise MalformedTask(f"{yml}: {exc}") from exc
    if not isinstance(doc, dict) or "input_files" not in doc or "properties" not in doc:
        raise MalformedTask(f"{yml}: needs input_files and properties")
    files = doc["input_files"]
    if isinstance(files, str):
        files = [files]
    if not isinstance(files, list) or not files or not all(isinstance(f, str) for f in files):
        raise MalformedTask(f"{yml}: input_files must be a path or a list of paths")
    inputs = tuple(str((yml.parent / f).resolve()) for f in files)
    if not isinstance(doc["properties"], list):
        raise MalformedTask(f"{yml}: properties must be a list")
    base = yml.relative_to(root).with_suffix("").as_posix()
    category = categorize(yml, categories)
    tasks = []
    for entry in doc["properties"]:
        if not isinstance(entry, dict) or "property_file" not in entry:
            raise MalformedTask(f"{yml}: property entry without property_file")
        tag = _property_tag(str(entry["property_file"]))
        if tag not in SUPPORTED_PROPERTIES:
            log.info("%s: skipping unsupported property %s", yml, tag)
            continue
        expected = entry.get("expected_verdict")
        if not isinstance(expected, bool):
            raise MalformedTask(f"{yml}: {tag} has no boolean expected_verdict")
        tasks.append(BenchTask(f"{base}:{tag}", inputs, tag, expected, category))
    return tasks


def load_tasks(
    root: str | Path,
    subset: str | None = None,
    categories: Mapping[str, Sequence[str]] | None = None,
) -> list[BenchTask]:
    """Every supported (task file, property) pair under `root`, sorted by id.

    `subset` keeps one category; None or "all" keeps everything.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"task root not found: {root}")
    categories = categories if categories is not None else load_categories()
    if subset not in (None, "all") and subset not in CATEGORIES:
        raise ValueError(f"unknown subset {subset!r}; expected one of {CATEGORIES}")
    tasks = []
    for yml in sorted(root.rglob("*.yml")):
        try:
            tasks.extend(parse_task_file(yml, root, categories))
        except MalformedTask as exc:
            log.warning("skipping malformed task: %s", exc)
    if subset not in (None, "all"):
        tasks = [t for t in tasks if t.category == subset]
    return sorted(tasks, key=lambda t: t.id)


def import_verdicts(path: str | Path) -> dict[str, str]:
    """Read (task id, verdict) rows; verdicts like 'false(valid-free)' become FALSE."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: row {row!r} needs task id and verdict")
            task_id, raw = row[0].strip(), row[1].strip().lower()
            if task_id.lower() in ("task", "task_id", "id") and not out:
                continue
            m = re.match(r"(true|false|unknown)", raw)
            out[task_id] = m[1].upper() if m else "UNKNOWN"
    return out


# --------------------------------------------------------------------------
# running


@dataclass
class BenchResult:
    task: BenchTask
    report: VerificationReport
    outcome: Outcome


def run_task(
    task: BenchTask,
    mode: str,
    provider,
    cfg: DriverConfig,
    store_dir: Path | None = None,
    preprocess: bool = False,
) -> VerificationReport:
    try:
        program = program_from_sources(list(task.input_files), preprocess=preprocess)
    except (ExtractionError, OSError) as exc:
        report = VerificationReport(task.id, task.property, mode, "UNKNOWN")
        report.failed_functions.append(FailedFunction("<extraction>", "extract", str(exc)))
        return report
    store = None
    if store_dir is not None:
        safe = re.sub(r"[^\w.-]+", "_", task.id)
        store = SummaryStore(store_dir / f"{safe}.jsonl")
    try:
        return run_property(program, task.property, mode, cfg, provider=provider, store=store, program_id=task.id)
    finally:
        if store is not None:
            store.close()


def bench(
    tasks: Sequence[BenchTask],
    mode: str,
    provider_factory: Callable[[], object],
    cfg: DriverConfig | None = None,
    *,
    jobs: int = 1,
    store_dir: str | Path | None = None,
    tool: str = "",
) -> list[BenchResult]:
    cfg = cfg or DriverConfig()
    if store_dir is not None:
        store_dir = Path(store_dir)
        store_dir.mkdir(parents=True, exist_ok=True)
    tool = tool or mode

    def one(task):
        report = run_task(task, mode, provider_factory(), cfg, store_dir)
        return BenchResult(task, report, _with_tool(judge(report, task), tool))

    if jobs == 1:
        return [one(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, tasks))


def _with_tool(o: Outcome, tool: str) -> Outcome:
    return Outcome(o.task_id, o.cls, o.bug_present, tool, o.property, o.category)


def judge_imported(tasks: Iterable[BenchTask], verdicts: Mapping[str, str], tool: str = "imported") -> list[Outcome]:
    out = []
    for t in tasks:
        v = verdicts.get(t.id)
        if v is None:
            log.warning("no imported verdict for %s; counting UNKNOWN", t.id)
            v = "UNKNOWN"
        out.append(judge_verdict(v, t, tool))
    return out


# --------------------------------------------------------------------------
# reporting


def aggregate(outcomes: Iterable[Outcome]) -> dict[tuple[str, str, str], ConfusionCounts]:
    groups: dict[tuple[str, str, str], ConfusionCounts] = defaultdict(ConfusionCounts)
    for o in outcomes:
        groups[(o.category, o.tool, o.property)].add(o)
    return dict(sorted(groups.items()))


def report_rows(outcomes: Iterable[Outcome]) -> list[dict]:
    rows = []
    for (category, tool, prop), c in aggregate(outcomes).items():
        acc, prec, rec = metrics(c)
        rows.append({
            "category": category, "tool": tool, "property": prop,
            "TP": c.tp, "FP": c.fp, "TN": c.tn, "FN": c.fn, "UNK": c.unk,
            "score": svcomp_score(c), "accuracy": acc, "precision": prec, "recall": rec,
        })
    return rows


_COLUMNS = ("category", "tool", "property", "TP", "FP", "TN", "FN", "UNK", "score", "accuracy", "precision", "recall")


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def emit_report(outcomes: Iterable[Outcome], fmt: str = "json") -> str:
    rows = report_rows(outcomes)
    if fmt == "json":
        return json.dumps({"columns": list(_COLUMNS), "rows": rows}, indent=2)
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")
    cells = [list(_COLUMNS)] + [[_cell(r[c]) for c in _COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(_COLUMNS))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) if i < 3 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
