"""Benchmark workloads, each in a checked and a plain (``base``) variant.

Checked variants call the hooks as ``assert actor.read(...)``, so running
them under ``python -O`` strips the access statements entirely; that is how
mode ``none`` is measured, and ``base`` is measured the same way.

* ``quicksort``: single-threaded in-place quicksort over cell objects, every
  element access checked.  Cells are assigned into the array resource, so
  first-receiver-owns gives the array ownership without explicit passes.
* ``pingpong``: two threads hand a ball back and forth through two binary
  semaphores.
* ``worklist``: worker threads claim graph nodes from a shared worklist, lock
  the node, update it and unlock it.
"""

from __future__ import annotations

import queue
import random
import sys
import threading
import time
from dataclasses import dataclass

from .checker import Session
from .sync import BinarySemaphore, Lock, SomThread

MODES = ("full", "partial", "none", "base")


@dataclass
class RunResult:
    seconds: float
    violations: int = 0
    explicit_passes: int = 0


class Cell:
    __slots__ = ("value", "som_id")

    def __init__(self, value):
        self.value = value


def _yes(_res) -> bool:
    return True


def _qsort(cells: list, lo: int, hi: int, rd, wr) -> None:
    # recurse into the smaller half, loop over the larger one
    while lo < hi:
        c = cells[(lo + hi) // 2]
        assert rd(c.som_id)
        pivot = c.value
        i, j = lo, hi
        while i <= j:
            while True:
                c = cells[i]
                assert rd(c.som_id)
                if not c.value < pivot:
                    break
                i += 1
            while True:
                c = cells[j]
                assert rd(c.som_id)
                if not c.value > pivot:
                    break
                j -= 1
            if i <= j:
                a = cells[i]
                b = cells[j]
                assert rd(a.som_id) and rd(b.som_id)
                x = a.value
                y = b.value
                assert wr(a.som_id) and wr(b.som_id)
                a.value = y
                b.value = x
                i += 1
                j -= 1
        if j - lo < hi - i:
            _qsort(cells, lo, j, rd, wr)
            lo = i
        else:
            _qsort(cells, i, hi, rd, wr)
            hi = j


def quicksort_values(n: int, seed: int = 1) -> list:
    rng = random.Random(seed)
    return [rng.random() for _ in range(n)]


class _Counter:
    def __init__(self):
        self.n = 0

    def __call__(self, _res) -> bool:
        self.n += 1
        return True


def quicksort_accesses(n: int, seed: int = 1) -> int:
    """Number of checked element accesses the sort performs (needs asserts on)."""
    if not __debug__:
        raise RuntimeError("access counting needs assertions enabled")
    cells = [Cell(v) for v in quicksort_values(n, seed)]
    for c in cells:
        c.som_id = None
    count = _Counter()
    _qsort(cells, 0, n - 1, count, count)
    return count.n


def _unchecked_alloc(cell) -> bool:
    cell.som_id = None
    return True


def _unchecked_assign(_target, _value) -> bool:
    return True


def run_quicksort(mode: str, n: int, seed: int = 1) -> RunResult:
    values = quicksort_values(n, seed)
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 10_000))
    t0 = time.perf_counter()
    if mode == "base":
        session = array = None
        alloc, assign, rd, wr = _unchecked_alloc, _unchecked_assign, _yes, _yes
    else:
        session = Session(mode)
        me = session.actor(session.root)
        array = me.allocate()
        alloc, assign, rd, wr = me.allocate, me.assign, me.read, me.write
    cells = []
    for v in values:
        c = Cell(v)
        assert alloc(c)
        # storing the cell in the array makes the array its owner
        assert assign(array, c.som_id)
        cells.append(c)
    _qsort(cells, 0, n - 1, rd, wr)
    elapsed = time.perf_counter() - t0
    if any(cells[k].value > cells[k + 1].value for k in range(n - 1)):
        raise AssertionError("quicksort produced unsorted output")
    if session is None:
        return RunResult(elapsed)
    return RunResult(elapsed, len(session.violations), session.explicit_passes)


class Ball:
    __slots__ = ("bounces", "som_id")

    def __init__(self):
        self.bounces = 0

    def bounce(self) -> None:
        self.bounces += 1


def _player(actor, mine: BinarySemaphore, other: BinarySemaphore, ball: Ball, rounds: int) -> None:
    for _ in range(rounds):
        mine.lock(actor)
        assert actor.write(ball.som_id)
        ball.bounce()
        other.unlock(actor)


def run_pingpong(mode: str, pairs: int) -> RunResult:
    """``pairs`` lock/unlock pairs per player."""
    if mode == "base":
        t0 = time.perf_counter()
        ball = Ball()
        ping, pong = threading.Lock(), threading.Lock()
        ping.acquire()

        def play(mine, other):
            for _ in range(pairs):
                mine.acquire()
                ball.bounce()
                other.release()

        threads = [threading.Thread(target=play, args=(ping, pong)), threading.Thread(target=play, args=(pong, ping))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - t0
        violations = passes = 0
    else:
        t0 = time.perf_counter()
        session = Session(mode)
        main = session.actor(session.root)
        ball = Ball()
        main.allocate(ball)
        ping = BinarySemaphore(session, main, ball)
        ping.lock(main)
        pong = BinarySemaphore(session, main, ball)
        players = [
            SomThread(session, main, _player, (ping, pong, ball, pairs)),
            SomThread(session, main, _player, (pong, ping, ball, pairs)),
        ]
        for p in players:
            p.start()
        for p in players:
            p.join()
        elapsed = time.perf_counter() - t0
        violations = len(session.violations)
        passes = session.explicit_passes
    if ball.bounces != 2 * pairs:
        raise AssertionError(f"expected {2 * pairs} bounces, got {ball.bounces}")
    return RunResult(elapsed, violations, passes)


def _worklist_tasks(tasks: int, nodes: int, seed: int) -> list:
    rng = random.Random(seed)
    return [rng.randrange(nodes) for _ in range(tasks)]


def _worker(actor, work: queue.SimpleQueue, locks: list, cells: list, touches: int) -> None:
    while True:
        try:
            k = work.get_nowait()
        except queue.Empty:
            return
        lk = locks[k]
        c = cells[k]
        lk.lock(actor)
        for _ in range(touches):
            assert actor.read(c.som_id)
            v = c.value
            assert actor.write(c.som_id)
            c.value = v + 1
        lk.unlock(actor)


def run_worklist(mode: str, workers: int, tasks: int = 2000, nodes: int = 64, touches: int = 10,
                 seed: int = 1) -> RunResult:
    order = _worklist_tasks(tasks, nodes, seed)
    work: queue.SimpleQueue = queue.SimpleQueue()
    for k in order:
        work.put(k)
    if mode == "base":
        t0 = time.perf_counter()
        cells = [Cell(0) for _ in range(nodes)]
        locks = [threading.Lock() for _ in range(nodes)]

        def run():
            while True:
                try:
                    k = work.get_nowait()
                except queue.Empty:
                    return
                c = cells[k]
                with locks[k]:
                    for _ in range(touches):
                        c.value = c.value + 1

        threads = [threading.Thread(target=run) for _ in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - t0
        violations = passes = 0
    else:
        t0 = time.perf_counter()
        session = Session(mode)
        main = session.actor(session.root)
        cells = []
        locks = []
        for _ in range(nodes):
            c = Cell(0)
            main.allocate(c)
            cells.append(c)
            locks.append(Lock(session, main, c))
        threads = [SomThread(session, main, _worker, (work, locks, cells, touches)) for _ in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - t0
        violations = len(session.violations)
        passes = session.explicit_passes
    if sum(c.value for c in cells) != tasks * touches:
        raise AssertionError("worklist lost updates")
    return RunResult(elapsed, violations, passes)


SUITES = {
    "quicksort": run_quicksort,
    "pingpong": run_pingpong,
    "worklist": run_worklist,
}

#: parameter points per suite: array size, lock/unlock pairs, worker count
DEFAULT_PARAMS = {
    "quicksort": (30_000,),
    "pingpong": (500, 1000, 2000),
    "worklist": (1, 2, 4),
}


def run(suite: str, mode: str, parameter: int) -> RunResult:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    return SUITES[suite](mode, parameter)
