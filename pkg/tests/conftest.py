from __future__ import annotations

from pathlib import Path

import pytest

from nlverify.extractor import program_from_sources
from nlverify.llm import CountingProvider, RuleProvider

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

# criterion number -> (title, [passed flags])
_ACCEPTANCE: dict[int, tuple[str, list[bool]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = marker.args
        _ACCEPTANCE.setdefault(number, (title, []))[1].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, results = _ACCEPTANCE[number]
        status = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title} ({sum(results)}/{len(results)} checks)")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def provider():
    return CountingProvider(RuleProvider())


@pytest.fixture(scope="session")
def corpus():
    return program_from_sources([FIXTURES / "corpus" / "list.c"])


@pytest.fixture(scope="session")
def buggy():
    return program_from_sources([FIXTURES / "double_free" / "buggy.c"])


@pytest.fixture(scope="session")
def fixed():
    return program_from_sources([FIXTURES / "double_free" / "fixed.c"])
