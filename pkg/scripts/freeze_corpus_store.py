"""Rebuild tests/fixtures/corpus/summaries.jsonl with the rule provider.

The verify pass reads callee leak and int summaries when they exist, so a
memsafety run made before the other properties is keyed differently from one
made after. Running memsafety once more at the end leaves a store that is warm
for every property in any order.
"""

from pathlib import Path

from nlverify.driver import run_property
from nlverify.extractor import program_from_sources
from nlverify.llm import RuleProvider
from nlverify.summaries import SummaryStore

CORPUS = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "corpus"
ORDER = ("valid-memsafety", "valid-memcleanup", "no-overflow", "valid-memsafety")


def main() -> None:
    out = CORPUS / "summaries.jsonl"
    out.unlink(missing_ok=True)
    program = program_from_sources([CORPUS / "list.c"])
    with SummaryStore(out) as store:
        for prop in ORDER:
            report = run_property(program, prop, provider=RuleProvider(), store=store)
            print(f"{prop}: {report.verdict}, {report.provider_calls} calls")


if __name__ == "__main__":
    main()
