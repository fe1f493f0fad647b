"""Recompute SV-COMP scores and accuracy from published confusion counts.

Prints one row per (category, tool) and the cross-category totals per tool.
"""

from collections import defaultdict

from nlverify.harness import ConfusionCounts, metrics, svcomp_score

# category, tool, TP, FP, TN, FN, UNK
ROWS = [
    ("juliet", "Sonnet-4.6", 921, 98, 830, 0, 0),
    ("juliet", "GPT-5.4", 805, 34, 894, 116, 0),
    ("juliet", "Qwen3.5-27B-Q4", 889, 147, 781, 32, 0),
    ("juliet", "Gemini-3.1-flash-lite", 894, 186, 742, 27, 0),
    ("juliet", "CPAchecker", 921, 0, 928, 0, 0),
    ("juliet", "Symbiotic", 921, 0, 913, 0, 15),
    ("juliet", "UAutomizer", 446, 0, 891, 0, 512),
    ("data_structure", "Sonnet-4.6", 255, 251, 318, 4, 0),
    ("data_structure", "GPT-5.4", 223, 196, 373, 36, 0),
    ("data_structure", "Qwen3.5-27B-Q4", 215, 182, 387, 44, 0),
    ("data_structure", "Gemini-3.1-flash-lite", 203, 234, 335, 56, 0),
    ("data_structure", "CPAchecker", 168, 0, 414, 0, 246),
    ("data_structure", "Symbiotic", 223, 0, 328, 1, 276),
    ("data_structure", "UAutomizer", 91, 0, 360, 0, 377),
    ("control_flow", "Sonnet-4.6", 86, 5, 18, 0, 0),
    ("control_flow", "Qwen3.5-27B-Q4", 77, 1, 22, 9, 0),
    ("control_flow", "GPT-5.4", 73, 0, 23, 13, 0),
    ("control_flow", "Gemini-3.1-flash-lite", 63, 4, 19, 23, 0),
    ("control_flow", "CPAchecker", 85, 0, 23, 0, 1),
    ("control_flow", "Symbiotic", 76, 0, 22, 1, 10),
    ("control_flow", "UAutomizer", 83, 0, 20, 0, 6),
]


def _fmt(x):
    return "-" if x is None else f"{x:.4f}"


def _line(cat, tool, c):
    acc, prec, rec = metrics(c)
    return (f"{cat:<15}{tool:<23}{c.tp:>5}{c.fp:>5}{c.tn:>5}{c.fn:>5}{c.unk:>5}"
            f"{svcomp_score(c):>7}  {_fmt(acc)}  {_fmt(prec)}  {_fmt(rec)}")


def main() -> None:
    print(f"{'category':<15}{'tool':<23}{'TP':>5}{'FP':>5}{'TN':>5}{'FN':>5}{'UNK':>5}{'score':>7}  acc     prec    recall")
    totals = defaultdict(ConfusionCounts)
    for cat, tool, tp, fp, tn, fn, unk in ROWS:
        c = ConfusionCounts(tp, fp, tn, fn, unk)
        print(_line(cat, tool, c))
        t = totals[tool]
        t.tp, t.fp, t.tn, t.fn, t.unk = t.tp + tp, t.fp + fp, t.tn + tn, t.fn + fn, t.unk + unk
    print()
    for tool, c in totals.items():
        print(_line("all", tool, c))


if __name__ == "__main__":
    main()
