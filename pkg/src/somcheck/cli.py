"""``somcheck`` command line: trace replay, program exploration, benchmarks.

Exit codes:

* ``check``: 0 clean, 1 violations, 2 unreadable or malformed trace
* ``explore``: 0 no race witness and no lemma failure, 1 otherwise,
  2 unreadable/malformed program or invalid initial graph, 3 state limit
* ``bench``: 0, or 2 on bad arguments
"""

from __future__ import annotations

import argparse
import sys

from . import bench, explorer, trace
from .checker import MODE_ENV, Mode
from .workloads import MODES, SUITES


def cmd_check(args) -> int:
    try:
        events = trace.load_events(args.file)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except trace.TraceError as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return 2
    try:
        report = trace.replay(events, args.mode)
    except trace.TraceError as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.render())
    return trace.exit_code(report)


def cmd_explore(args) -> int:
    try:
        program = explorer.load(args.file, repeat_bound=args.repeat_bound)
        report = explorer.explore(program, max_states=args.max_states, relaxed_release=args.relaxed_release)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except explorer.InvalidInitialGraph as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return 2
    except explorer.ParseError as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return 2
    except explorer.LimitExceeded as exc:
        print(f"error: {exc}; partial report follows", file=sys.stderr)
        sys.stdout.write(exc.report.dumps() if args.json else exc.report.render())
        return 3
    sys.stdout.write(report.dumps() if args.json else report.render())
    return 0 if report.ok else 1


def cmd_bench(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        print(f"error: unknown mode(s) {', '.join(bad) or '(none given)'}; expected {', '.join(MODES)}",
              file=sys.stderr)
        return 2
    if args.runs < bench.MIN_RUNS:
        print(f"error: --runs must be at least {bench.MIN_RUNS}", file=sys.stderr)
        return 2
    progress = None
    if args.verbose:
        def progress(suite, param, done, total):
            print(f"{suite} {param}: {done}/{total}", file=sys.stderr)
    results = bench.measure(args.suite, modes, args.params, runs=args.runs, warmup=args.warmup, progress=progress)
    print(bench.render(results))
    if args.csv:
        for path in bench.write_csv(args.csv, results):
            print(f"wrote {path}")
    return 0


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="somcheck", description="Shared Ownership Model checker")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="replay a .somtrace event log")
    p.add_argument("file")
    p.add_argument("--mode", type=Mode.parse, default=None,
                   help=f"full, partial or none (default: ${MODE_ENV} or full)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("explore", help="exhaustively explore a .som program")
    p.add_argument("file")
    p.add_argument("--max-states", type=_positive, default=explorer.DEFAULT_MAX_STATES)
    p.add_argument("--repeat-bound", type=_positive, default=explorer.DEFAULT_REPEAT_BOUND)
    p.add_argument("--relaxed-release", action="store_true",
                   help="let any root, not only the sole root, release a shared reference")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("bench", help="measure checking overhead")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--modes", default=",".join(MODES), help="comma-separated subset of " + ",".join(MODES))
    p.add_argument("--runs", type=int, default=bench.MIN_RUNS)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--params", type=_positive, nargs="+", default=None, metavar="N",
                   help="parameter points (default depends on the suite)")
    p.add_argument("--csv", metavar="DIR", help="write <suite>.<mode>.csv files here")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "mode", "unset") is None:
        try:
            args.mode = Mode.from_env()
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
