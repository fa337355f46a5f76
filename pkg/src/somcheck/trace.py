"""Event logs of SOM statements (``.somtrace``) and their replay.

One JSON object per line, keys ``seq, actor, op, target, args`` in that
order, compact separators, UTF-8, LF line endings.  Entities are referred to
by symbolic names so logs stay readable and stable across runs.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Iterable

from . import graph as G
from .checker import Mode, Session, Violation
from .graph import EntityId, Kind
from .semantics import Allocate, Pass, Read, Release, Share, Spawn, Statement, Write

SUFFIX = ".somtrace"
KEYS = ("seq", "actor", "op", "target", "args")
ARG_KEYS = {
    "read": (),
    "write": (),
    "pass": ("from", "to"),
    "share": ("with",),
    "release": ("by",),
    "allocate": ("owner", "binds"),
    "spawn": ("binds", "body_ref"),
}
NAME = re.compile(r"[a-z][a-z0-9_]*\Z")


class TraceError(ValueError):
    pass


class ParseError(TraceError):
    def __init__(self, message: str, line: int, offset: int):
        super().__init__(f"line {line} (byte {offset}): {message}")
        self.line = line
        self.offset = offset
        self.reason = message


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    actor: str
    op: str
    target: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        problem = _event_problem(self.seq, self.actor, self.op, self.target, self.args)
        if problem:
            raise TraceError(problem)

    def encode(self) -> str:
        args = {k: self.args[k] for k in ARG_KEYS[self.op]}
        obj = {"seq": self.seq, "actor": self.actor, "op": self.op, "target": self.target, "args": args}
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n"


def _event_problem(seq, actor, op, target, args) -> str | None:
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        return f"seq must be a non-negative integer, got {seq!r}"
    if op not in ARG_KEYS:
        return f"unknown op {op!r}"
    for role, value in (("actor", actor), ("target", target)):
        if not isinstance(value, str) or not NAME.match(value):
            return f"{role} {value!r} is not a valid name"
    if not isinstance(args, dict):
        return "args must be an object"
    want = ARG_KEYS[op]
    if set(args) != set(want):
        return f"{op} takes args {list(want)}, got {list(args)}"
    for k in want:
        v = args[k]
        if k == "body_ref" and v is None:
            continue
        if not isinstance(v, str) or not NAME.match(v):
            return f"arg {k} {v!r} is not a valid name"
    return None


def event_from_statement(seq: int, actor: str, s: Statement, name: Callable[[EntityId], str]) -> TraceEvent:
    if isinstance(s, Read):
        return TraceEvent(seq, actor, "read", name(s.resource), {})
    if isinstance(s, Write):
        return TraceEvent(seq, actor, "write", name(s.resource), {})
    if isinstance(s, Pass):
        return TraceEvent(seq, actor, "pass", name(s.resource), {"from": name(s.old_owner), "to": name(s.new_owner)})
    if isinstance(s, Share):
        return TraceEvent(seq, actor, "share", name(s.resource), {"with": name(s.owner)})
    if isinstance(s, Release):
        return TraceEvent(seq, actor, "release", name(s.resource), {"by": name(s.owner)})
    if isinstance(s, Allocate):
        return TraceEvent(seq, actor, "allocate", name(s.resource), {"owner": name(s.owner), "binds": name(s.resource)})
    if isinstance(s, Spawn):
        return TraceEvent(seq, actor, "spawn", name(s.process), {"binds": name(s.process), "body_ref": None})
    raise TypeError(f"not a statement: {s!r}")


def write_event(stream: IO[str], event: TraceEvent) -> None:
    stream.write(event.encode())


def read_events(stream: IO[str] | Iterable[str]) -> list[TraceEvent]:
    """Parse a whole log; blank lines are skipped."""
    events = []
    offset = 0
    last = -1
    for lineno, line in enumerate(stream, 1):
        start = offset
        offset += len(line.encode("utf-8"))
        text = line.rstrip("\n")
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            col = len(text[: exc.pos].encode("utf-8"))
            raise ParseError(f"invalid JSON: {exc.msg}", lineno, start + col) from None
        if not isinstance(obj, dict):
            raise ParseError("event must be a JSON object", lineno, start)
        if tuple(obj) != KEYS:
            missing = [k for k in KEYS if k not in obj]
            if missing:
                raise ParseError(f"missing key {missing[0]!r}", lineno, start)
            raise ParseError(f"keys must be exactly {list(KEYS)} in order, got {list(obj)}", lineno, start)
        problem = _event_problem(obj["seq"], obj["actor"], obj["op"], obj["target"], obj["args"])
        if problem:
            raise ParseError(problem, lineno, start)
        if obj["seq"] <= last:
            raise ParseError(f"seq {obj['seq']} does not increase (previous {last})", lineno, start)
        last = obj["seq"]
        events.append(TraceEvent(obj["seq"], obj["actor"], obj["op"], obj["target"], obj["args"]))
    return events


def load_events(path: str | Path) -> list[TraceEvent]:
    with open(path, encoding="utf-8", newline="\n") as f:
        return read_events(f)


def dump_events(path: str | Path, events: Iterable[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ev in events:
            write_event(f, ev)


class TraceWriter:
    """Statement log attached to a :class:`~somcheck.checker.Session`.

    The session calls :meth:`record` inside its critical section, so events
    appear in the session's total order.
    """

    def __init__(self, stream: IO[str]):
        self.stream = stream
        self.events: list[TraceEvent] = []
        self._last = -1
        self._lock = threading.Lock()

    def write(self, event: TraceEvent) -> None:
        with self._lock:
            if event.seq <= self._last:
                raise TraceError(f"seq {event.seq} does not increase (previous {self._last})")
            self._last = event.seq
            write_event(self.stream, event)
            self.events.append(event)

    def record(self, seq: int, actor: EntityId, s: Statement, name: Callable[[EntityId], str]) -> None:
        self.write(event_from_statement(seq, name(actor), s, name))


@dataclass
class ReplayReport:
    violations: list[Violation]
    final_graph: str

    @property
    def clean(self) -> bool:
        return not self.violations

    def render(self) -> str:
        lines = [f"violations: {len(self.violations)}"]
        lines.extend(v.text for v in self.violations)
        lines.append("final graph:")
        lines.extend("    " + ln for ln in self.final_graph.splitlines())
        return "\n".join(lines) + "\n"


class _Resolver:
    """Maps trace names to session entities, creating them on binding events."""

    def __init__(self, session: Session):
        self.session = session
        self.ids = {name: e for e, name in session.names.items()}

    def use(self, name: str, kind: Kind | None, ev: TraceEvent) -> EntityId:
        e = self.ids.get(name)
        if e is None:
            # undeclared: an id outside the graph, reported as UnknownEntity
            e = self.ids[name] = self.session.new_id(kind or Kind.RESOURCE, name)
        elif kind is not None and e.kind is not kind:
            raise TraceError(f"seq {ev.seq}: {name} is a {e.kind.name.lower()}, expected a {kind.name.lower()}")
        return e

    def bind(self, name: str, kind: Kind, ev: TraceEvent) -> EntityId:
        if name in self.ids:
            return self.use(name, kind, ev)
        e = self.ids[name] = self.session.new_id(kind, name)
        return e

    def statement(self, ev: TraceEvent) -> Statement:
        a = ev.args
        R = Kind.RESOURCE
        if ev.op == "read":
            return Read(self.use(ev.target, R, ev))
        if ev.op == "write":
            return Write(self.use(ev.target, R, ev))
        if ev.op == "pass":
            return Pass(self.use(ev.target, R, ev), self.use(a["from"], None, ev), self.use(a["to"], None, ev))
        if ev.op == "share":
            return Share(self.use(ev.target, R, ev), self.use(a["with"], None, ev))
        if ev.op == "release":
            return Release(self.use(ev.target, R, ev), self.use(a["by"], None, ev))
        if ev.op == "allocate":
            owner = self.use(a["owner"], None, ev)
            return Allocate(self.bind(a["binds"], R, ev), owner)
        if ev.op == "spawn":
            return Spawn(self.bind(a["binds"], Kind.PROCESS, ev))
        raise TraceError(f"seq {ev.seq}: unknown op {ev.op!r}")


def replay(events: Iterable[TraceEvent], mode: Mode | str = Mode.FULL) -> ReplayReport:
    """Feed ``events`` in order into a fresh session and report what failed.

    The fresh session already holds process ``p0`` owning ``r0``; traces
    declare everything else with ``spawn``/``allocate`` events.
    """
    session = Session(mode)
    names = _Resolver(session)
    for ev in events:
        actor = names.use(ev.actor, Kind.PROCESS, ev)
        session.check(actor, names.statement(ev), seq=ev.seq)
    return ReplayReport(list(session.violations), G.render(session.graph, session.names))


def exit_code(report: ReplayReport) -> int:
    return 0 if report.clean else 1
