"""Overhead benchmark harness.

Each mode runs in its own persistent worker process so that interpreter
flags can differ: ``none`` and ``base`` run under ``python -O``, which strips
the ``assert actor.read(...)`` hook sites, while ``full`` and ``partial``
keep them.  Runs are interleaved round-robin across modes so drift on a noisy
machine hits every mode alike.  As with :mod:`timeit`, the cyclic garbage
collector is paused during each timed run (and a collection is forced just
before it).

Worker protocol (one JSON object per line): the controller sends
``{"suite": ..., "param": ...}`` and the worker answers
``{"seconds": ..., "violations": ..., "explicit_passes": ...}``; an empty
line or EOF ends the worker.
"""

from __future__ import annotations

import argparse
import csv
import gc
import json
import math
import statistics
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from .workloads import DEFAULT_PARAMS, MODES, SUITES, run

OPTIMIZED = frozenset(("none", "base"))
MIN_RUNS = 30


@dataclass
class BenchResult:
    benchmark: str
    mode: str
    parameter: int
    mean_ms: float
    stddev_ms: float
    runs: int
    violations: int = 0


def timed_run(suite: str, mode: str, param: int) -> dict:
    gc.collect()
    enabled = gc.isenabled()
    gc.disable()
    try:
        r = run(suite, mode, param)
    finally:
        if enabled:
            gc.enable()
    return {"seconds": r.seconds, "violations": r.violations, "explicit_passes": r.explicit_passes}


def _worker(mode: str) -> int:
    if mode in OPTIMIZED and __debug__:
        print(f"mode {mode} must run under python -O", file=sys.stderr)
        return 2
    for line in sys.stdin:
        if not line.strip():
            break
        req = json.loads(line)
        out = timed_run(req["suite"], mode, int(req["param"]))
        sys.stdout.write(json.dumps(out) + "\n")
        sys.stdout.flush()
    return 0


class Worker:
    def __init__(self, mode: str):
        cmd = [sys.executable]
        if mode in OPTIMIZED:
            cmd.append("-O")
        cmd += ["-m", "somcheck.bench", "--worker", mode]
        self.mode = mode
        self.proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1)

    def run(self, suite: str, param: int) -> dict:
        self.proc.stdin.write(json.dumps({"suite": suite, "param": param}) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            code = self.proc.wait()
            raise RuntimeError(f"{self.mode} worker exited with status {code}")
        return json.loads(line)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            self.proc.wait(timeout=30)


def measure(suite: str, modes=MODES, params=None, *, runs: int = 30, warmup: int = 10,
            progress=None) -> list[BenchResult]:
    """Mean and stddev (ms) per mode and parameter."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
    modes = list(modes)
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}; expected one of {', '.join(MODES)}")
    if runs < MIN_RUNS or warmup < 0:
        raise ValueError(f"runs must be at least {MIN_RUNS} and warmup non-negative")
    params = DEFAULT_PARAMS[suite] if params is None else tuple(params)
    workers = {m: Worker(m) for m in modes}
    results = []
    try:
        for param in params:
            times = {m: [] for m in modes}
            bad = {m: 0 for m in modes}
            for i in range(warmup + runs):
                # rotate the starting mode so none is always first
                k = i % len(modes)
                for m in modes[k:] + modes[:k]:
                    out = workers[m].run(suite, param)
                    if i >= warmup:
                        times[m].append(out["seconds"] * 1000.0)
                        bad[m] += out["violations"]
                if progress:
                    progress(suite, param, i + 1, warmup + runs)
            for m in modes:
                t = times[m]
                sd = statistics.stdev(t) if len(t) > 1 else 0.0
                results.append(BenchResult(suite, m, param, statistics.fmean(t), sd, len(t), bad[m]))
    finally:
        for w in workers.values():
            w.close()
    return results


def ratios(results: list[BenchResult], base: str = "base") -> dict:
    """(mode, parameter) -> mean / mean of ``base`` at the same parameter."""
    ref = {r.parameter: r.mean_ms for r in results if r.mode == base}
    return {(r.mode, r.parameter): r.mean_ms / ref[r.parameter]
            for r in results if r.parameter in ref and ref[r.parameter] > 0}


def csv_path(directory: str | Path, suite: str, mode: str) -> Path:
    return Path(directory) / f"{suite}.{mode}.csv"


def write_csv(directory: str | Path, results: list[BenchResult]) -> list[Path]:
    """One ``parameter,time,error`` file per (suite, mode); times in ms."""
    groups: dict = {}
    for r in results:
        groups.setdefault((r.benchmark, r.mode), []).append(r)
    Path(directory).mkdir(parents=True, exist_ok=True)
    paths = []
    for (suite, mode), rows in groups.items():
        path = csv_path(directory, suite, mode)
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("parameter", "time", "error"))
            for r in sorted(rows, key=lambda r: r.parameter):
                w.writerow((r.parameter, repr(r.mean_ms), repr(r.stddev_ms)))
        paths.append(path)
    return paths


def read_csv(path: str | Path) -> list[tuple[int, float, float]]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["parameter", "time", "error"]:
        raise ValueError(f"{path}: expected header parameter,time,error")
    out = []
    for row in rows[1:]:
        p, t, e = row
        t, e = float(t), float(e)
        if not (math.isfinite(t) and math.isfinite(e)):
            raise ValueError(f"{path}: non-finite value in {row}")
        out.append((int(p), t, e))
    return out


def render(results: list[BenchResult], base: str = "base") -> str:
    rel = ratios(results, base)
    lines = [f"{'benchmark':<10} {'mode':<8} {'param':>7} {'mean ms':>10} {'sd ms':>8} {'x base':>7} {'viol':>5}"]
    for r in results:
        x = rel.get((r.mode, r.parameter))
        xs = f"{x:7.2f}" if x is not None else f"{'-':>7}"
        lines.append(f"{r.benchmark:<10} {r.mode:<8} {r.parameter:>7} {r.mean_ms:10.2f} {r.stddev_ms:8.2f} {xs} {r.violations:>5}")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="somcheck.bench", description="benchmark worker and driver")
    ap.add_argument("--worker", metavar="MODE", choices=MODES, help="serve timing requests on stdin")
    ap.add_argument("suite", nargs="?", choices=sorted(SUITES))
    args = ap.parse_args(argv)
    if args.worker:
        return _worker(args.worker)
    if not args.suite:
        ap.error("a suite is required unless --worker is given")
    print(render(measure(args.suite)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
