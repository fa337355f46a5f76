"""Run each deliberate synchronization mistake and print what the checker says.

Run with ``python3 demos/misuse_tour.py`` from the repository root.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import misuse  # noqa: E402


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", default="full", choices=["full", "partial", "none"])
    args = ap.parse_args(argv)
    for name, scenario in misuse.SCENARIOS.items():
        s = scenario(args.mode)
        print(f"== {name}: {len(s.violations)} violation(s)")
        for v in s.violations:
            print("  ", v.text.splitlines()[0])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
