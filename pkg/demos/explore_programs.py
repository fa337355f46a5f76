"""Explore every bundled .som program and summarize the state spaces."""

from __future__ import annotations

import argparse

from somcheck.explorer import bundled_programs, check_deadlock, explore, load


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--relaxed-release", action="store_true")
    args = ap.parse_args(argv)
    for name, path in sorted(bundled_programs().items()):
        r = explore(load(path), relaxed_release=args.relaxed_release)
        print(f"{name:14} states={r.states:4} transitions={r.transitions:4} "
              f"races={len(r.witnesses)} deadlocks={len(check_deadlock(r))}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
