"""Re-render the prompt snapshots in tests/golden after an intended template change.

Run from the repository root:  python3 scripts/update_golden.py
Review the diff before committing; the snapshot test exists to catch drift.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from tests.snapshots import write_all  # noqa: E402

if __name__ == "__main__":
    for name in write_all():
        print(f"wrote tests/golden/{name}.txt")
