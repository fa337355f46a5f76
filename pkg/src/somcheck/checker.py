"""Dynamic ownership checking.

A :class:`Session` simulates the ownership model next to a running program.
Program code reports field accesses, allocations, assignments and thread
starts through hooks; each hook becomes a SOM statement whose premise is
treated as an assertion.  A failed premise is recorded as a
:class:`Violation` and returned, and the session keeps going.

Hook results are truthy on success and falsy on violation, so call sites can
be written as ``assert som.read(obj_id)``.  Running under ``python -O`` then
removes the statements entirely, which is the deployment configuration.
"""

from __future__ import annotations

import itertools
import os
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from . import graph as G
from .graph import EntityId, Kind, OwnershipGraph
from .semantics import (
    RIGHTS_CHANGING,
    Allocate,
    Pass,
    Read,
    Release,
    Share,
    Spawn,
    Statement,
    Verdict,
    Write,
    access_verdict,
    allocate_verdict,
    mutate,
    operands,
    pass_verdict,
    premise,
    render_statement,
)

MODE_ENV = "SOMCHECK_MODE"

_ACCESS = frozenset((Read, Write))
_RIGHTS_CHANGING = frozenset(RIGHTS_CHANGING)

_new_entity = tuple.__new__  # skips the Python-level NamedTuple constructor


class Mode(Enum):
    FULL = "full"
    PARTIAL = "partial"
    NONE = "none"

    @classmethod
    def parse(cls, text: str) -> Mode:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown mode {text!r}; expected full, partial or none") from None

    @classmethod
    def from_env(cls, default: Mode | None = None) -> Mode:
        value = os.environ.get(MODE_ENV)
        if value:
            return cls.parse(value)
        return default or cls.FULL


# enum attribute lookups are slow on the hot paths
_FULL, _PARTIAL, _NONE = Mode.FULL, Mode.PARTIAL, Mode.NONE
_ENABLED = Verdict.ENABLED
_RESOURCE = Kind.RESOURCE


class _Ok:
    # no __bool__: plain objects are truthy without a Python-level call
    __slots__ = ()

    def __repr__(self) -> str:
        return "OK"


OK = _Ok()


@dataclass(frozen=True)
class Violation:
    kind: Verdict
    actor: EntityId
    statement: Statement
    graph_snapshot: str
    sequence_number: int
    text: str = field(default="", compare=False, repr=False)

    def __bool__(self) -> bool:
        return False

    def header(self) -> str:
        return self.text.partition("\n")[0]

    def __str__(self) -> str:
        return self.text


class CheckerError(Exception):
    pass


class OwnershipViolation(CheckerError):
    """Raised instead of continuing when the session is strict."""

    def __init__(self, violation: Violation):
        super().__init__(violation.header())
        self.violation = violation


class MultiOwnerError(CheckerError):
    """Single-owner pass requested on a resource with several direct owners."""


def format_violation(kind: Verdict, seq: int, actor: str, stmt: str, snapshot: str) -> str:
    lines = [f"#{seq} {kind} actor={actor} stmt={stmt}"]
    lines.extend("    " + ln for ln in snapshot.splitlines())
    return "\n".join(lines)


class _Rights(dict):
    """Resources an actor was last seen allowed to read (or write).

    A hit is a plain C-level dict lookup; a miss runs the checked slow path,
    which stores the key only when access is allowed and no trace is attached.
    """

    __slots__ = ("actor", "writes")

    def __init__(self, actor: Actor, writes: bool):
        super().__init__()
        self.actor = actor
        self.writes = writes

    def __missing__(self, res):
        a = self.actor
        return a.session._access(a, res, self.writes)


class _AlwaysOk(dict):
    """Rights table of a session that skips access checks."""

    __slots__ = ()

    def __missing__(self, res):
        self[res] = OK
        return OK


class Actor:
    """Hook handle bound to one process.

    ``read(res)`` and ``write(res)`` are bound lookups into per-actor tables
    of resources this process was last seen allowed to access; the session
    drops entries before any statement that can change who roots them, so a
    hit is always current.
    """

    __slots__ = ("session", "pid", "_readable", "_writable", "read", "write")

    def __init__(self, session: Session, pid: EntityId):
        self.session = session
        self.pid = pid
        self._tables()
        self.read = self._readable.__getitem__
        self.write = self._writable.__getitem__

    def _tables(self) -> None:
        self._readable = _Rights(self, False)
        self._writable = _Rights(self, True)

    def allocate(self, obj=None, scope: str | None = None) -> EntityId:
        """New resource staged for this process; stored as ``obj.som_id`` if given."""
        rid = self.session.on_allocate(self.pid, scope)
        if obj is not None:
            obj.som_id = rid
        return rid

    def assign(self, target: EntityId, value: EntityId | None):
        return self.session.on_field_assign(self.pid, target, value)

    def pass_to(self, res: EntityId, to: EntityId):
        return self.session.pass_to(self.pid, res, to)

    @property
    def context(self) -> EntityId:
        return self.session.context_of(self.pid)

    def __repr__(self) -> str:
        return f"Actor({self.session.name_of(self.pid)})"


class _PassiveActor(Actor):
    """Actor for sessions that skip access checks (modes Partial and None)."""

    __slots__ = ()

    def _tables(self) -> None:
        self._readable = self._writable = _AlwaysOk()


class Session:
    """Checker state: the ownership graph, staging objects and violations.

    All statements are applied under one session lock, which fixes a total
    order; ``sequence_number`` of violations (and ``seq`` of trace events)
    follows it.  Cached access hits in :class:`Actor` bypass the lock and are
    not numbered.
    """

    def __init__(
        self,
        mode: Mode | str | None = None,
        *,
        strict: bool = False,
        relaxed_release: bool = False,
        trace=None,
        root_name: str | None = None,
    ):
        if isinstance(mode, str):
            mode = Mode.parse(mode)
        self.mode: Mode = mode if mode is not None else Mode.from_env()
        self.strict = strict
        self.relaxed_release = relaxed_release
        self._trace = trace
        self._lock = threading.RLock()
        self._graph = OwnershipGraph()
        self._names: dict[EntityId, str] = {}
        # per-kind counters; an id's default name is its str(): p0, r3, ...
        self._ordinal = {Kind.PROCESS: itertools.count(), Kind.RESOURCE: itertools.count()}
        self.violations: list[Violation] = []
        self._seq = 0
        self._actors: dict[EntityId, Actor] = {}
        self._staging: dict[EntityId, EntityId] = {}
        self._context: dict[EntityId, EntityId] = {}
        self._terminated: set[EntityId] = set()
        self._scope_of: dict[EntityId, str] = {}
        self._disabled_scopes: set[str] = set()
        self._proxies: set[EntityId] = set()
        self._prefixes: dict[str, int] = {}
        self.explicit_passes = 0

        # bootstrap is not a statement of the program and is never logged
        self.root = self.new_id(Kind.PROCESS, root_name)
        stage = self.new_id(Kind.RESOURCE)
        self._graph.insert_entity(self.root)
        self._graph.insert_entity(stage)
        self._graph.insert_edge(self.root, stage)
        self._staging[self.root] = stage
        self._context[self.root] = self.root

    # -- naming and identity ---------------------------------------------

    def new_id(self, kind: Kind, name: str | None = None) -> EntityId:
        """Fresh id (not yet in the graph); named ``p<k>``/``r<k>`` by default."""
        # next() on a count is atomic, so no lock is needed here
        e = _new_entity(EntityId, (kind, next(self._ordinal[kind])))
        if name is not None:
            self._names[e] = name
        return e

    def fresh_name(self, prefix: str) -> str:
        """``prefix`` followed by a per-session counter: ``lock0``, ``lock1``..."""
        with self._lock:
            n = self._prefixes.get(prefix, 0)
            self._prefixes[prefix] = n + 1
        return f"{prefix}{n}"

    def name(self, e: EntityId, name: str) -> None:
        self._names[e] = name

    def name_of(self, e: EntityId) -> str:
        # the fallback stays a valid trace name
        return self._names.get(e) or str(e)

    @property
    def names(self) -> dict:
        """Name of every entity in the graph or explicitly named."""
        with self._lock:
            out = {e: str(e) for e in self._graph._entities}
            out.update(self._names)
        return out

    # -- read-only views -------------------------------------------------

    @property
    def graph(self) -> OwnershipGraph:
        """Consistent snapshot of the ownership graph."""
        with self._lock:
            return self._graph.copy()

    def snapshot(self) -> str:
        with self._lock:
            return G.render(self._graph, self._names)

    def roots(self, e: EntityId) -> frozenset:
        with self._lock:
            return G.root_of(self._graph, e)

    def staging_of(self, pid: EntityId) -> EntityId:
        return self._staging[pid]

    def context_of(self, pid: EntityId) -> EntityId:
        """Entity standing for ``caller`` in synchronization statements."""
        return self._context.get(pid, pid)

    def set_context(self, pid: EntityId, ctx: EntityId) -> None:
        self._context[pid] = ctx

    def direct_owners(self, res: EntityId) -> frozenset:
        with self._lock:
            return self._graph.owners_of(res)

    def actor(self, pid: EntityId) -> Actor:
        a = self._actors.get(pid)
        if a is None:
            cls = Actor if self.mode is Mode.FULL else _PassiveActor
            a = self._actors.setdefault(pid, cls(self, pid))
        return a

    # -- core ------------------------------------------------------------

    def check(self, actor: EntityId, s: Statement, *, seq: int | None = None):
        """Assert the premise of ``s`` issued by ``actor``; apply it if it holds.

        ``seq`` overrides the session's own numbering (used by trace replay).
        """
        mode = self.mode
        if mode is Mode.NONE:
            return OK
        if type(s) in _ACCESS:
            if mode is Mode.PARTIAL or self._scope_disabled(s.resource):
                return OK
        with self._lock:
            return self._serialized(actor, s, seq)

    def _scope_disabled(self, res: EntityId) -> bool:
        return bool(self._disabled_scopes) and self._scope_of.get(res) in self._disabled_scopes

    def _invalidate(self, res: EntityId | None = None) -> None:
        """Forget cached rights that a change above ``res`` may have revoked.

        Only ``res`` and what it (transitively) owns can change roots.
        """
        actors = self._actors.values()
        if not actors:
            return
        if self.mode is not _FULL:
            return
        if res is not None and res not in self._graph._owned:
            # a leaf: the common case of a freshly staged object
            for a in actors:
                a._readable.pop(res, None)
                a._writable.pop(res, None)
            return
        below = None if res is None else self._descendants(res, 64)
        for a in actors:
            if below is None:
                a._readable.clear()
                a._writable.clear()
            else:
                for e in below:
                    a._readable.pop(e, None)
                    a._writable.pop(e, None)

    def _descendants(self, res: EntityId, limit: int):
        """``res`` and everything below it, or None when more than ``limit``."""
        owned = self._graph._owned
        out = {res}
        stack = [res]
        while stack:
            for child in owned.get(stack.pop(), ()):
                if child not in out:
                    if len(out) >= limit:
                        return None
                    out.add(child)
                    stack.append(child)
        return out

    def _serialized(self, actor: EntityId, s: Statement, seq: int | None):
        n = self._seq if seq is None else seq
        self._seq = n + 1
        if self._trace is not None:
            self._trace.record(n, actor, s, self.name_of)
        g = self._graph
        verdict = premise(g, actor, s, relaxed_release=self.relaxed_release)
        if verdict is Verdict.ENABLED:
            if type(s) in _RIGHTS_CHANGING:
                self._invalidate(s.resource)
            mutate(g, s)
            return OK
        return self._violation(verdict, actor, s, n)

    def _violation(self, verdict: Verdict, actor: EntityId, s: Statement, n: int) -> Violation:
        snap = G.render(self._graph, self._names)
        text = format_violation(verdict, n, self.name_of(actor), render_statement(s, self.name_of), snap)
        v = Violation(verdict, actor, s, snap, n, text)
        self.violations.append(v)
        self._apply_anyway(s)
        if self.strict:
            raise OwnershipViolation(v)
        return v

    def _apply_anyway(self, s: Statement) -> None:
        """Keep the model aligned with the program when that stays well formed."""
        if isinstance(s, (Read, Write, Spawn, Allocate)):
            # reads change nothing; a non-fresh binding cannot be re-created
            return
        g = self._graph
        if any(e not in g for e in operands(s)):
            return
        candidate = g.copy()
        try:
            mutate(candidate, s)
        except G.NoSuchEdge:
            return
        if G.is_ownership_graph(candidate):
            self._invalidate(s.resource)
            self._graph = candidate

    def _access(self, view: Actor, res: EntityId, write: bool):
        """Slow path of :meth:`Actor.read`/:meth:`Actor.write`."""
        if self._scope_disabled(res):
            return OK
        pid = view.pid
        with self._lock:
            n = self._seq
            self._seq = n + 1
            trace = self._trace
            if trace is not None:
                trace.record(n, pid, Write(res) if write else Read(res), self.name_of)
            verdict, sole = access_verdict(self._graph, pid, res, write)
            if verdict is _ENABLED:
                # with a trace attached every access must reach the log
                if trace is None:
                    dict.__setitem__(view._readable, res, OK)
                    if sole:
                        dict.__setitem__(view._writable, res, OK)
                return OK
            return self._violation(verdict, pid, Write(res) if write else Read(res), n)

    # -- scopes ----------------------------------------------------------

    def disable_checks(self, scope: str) -> None:
        """Skip read/write checks on resources allocated under ``scope``."""
        with self._lock:
            self._disabled_scopes.add(scope)

    def enable_checks(self, scope: str) -> None:
        with self._lock:
            self._disabled_scopes.discard(scope)

    @contextmanager
    def unchecked(self, scope: str):
        self.disable_checks(scope)
        try:
            yield
        finally:
            self.enable_checks(scope)

    # -- language hooks ----------------------------------------------------

    def on_field_read(self, actor: EntityId, obj: EntityId):
        return self.actor(actor).read(obj)

    def on_field_write(self, actor: EntityId, obj: EntityId):
        return self.actor(actor).write(obj)

    def allocate(self, actor: EntityId, owner: EntityId, name: str | None = None) -> EntityId:
        """``r := owner.allocate`` issued by ``actor``; returns ``r``."""
        rid = self.new_id(Kind.RESOURCE, name)
        self.check(actor, Allocate(rid, owner))
        return rid

    def on_allocate(self, actor: EntityId, scope: str | None = None, name: str | None = None) -> EntityId:
        """A new object: allocated under the actor's staging resource."""
        if self.mode is _NONE:
            return _new_entity(EntityId, (_RESOURCE, next(self._ordinal[_RESOURCE])))
        rid = self.new_id(_RESOURCE, name)
        stage = self._staging[actor]
        # same as check(actor, Allocate(rid, stage)) without building the
        # statement unless a trace or a violation needs it
        with self._lock:
            n = self._seq
            self._seq = n + 1
            if self._trace is not None:
                self._trace.record(n, actor, Allocate(rid, stage), self.name_of)
            g = self._graph
            verdict = allocate_verdict(g, actor, rid, stage)
            if verdict is _ENABLED:
                g._entities.add(rid)
                g._owners[rid] = {stage}
                g._owned.setdefault(stage, set()).add(rid)
            else:
                self._violation(verdict, actor, Allocate(rid, stage), n)
        if scope is not None:
            self._scope_of[rid] = scope
        return rid

    def on_field_assign(self, actor: EntityId, target: EntityId, value: EntityId | None):
        """``target.f = value``: a write of ``target``, and first receiver owns."""
        view = self._actors.get(actor) or self.actor(actor)
        result = view.write(target)
        if self.mode is _NONE or value is None:
            return result
        stage = self._staging.get(actor)
        if stage is None:
            return result
        with self._lock:
            g = self._graph
            if stage not in g._owners.get(value, ()):
                return result
            n = self._seq
            self._seq = n + 1
            if self._trace is not None:
                self._trace.record(n, actor, Pass(value, stage, target), self.name_of)
            owners = g._owners
            above = owners[value]
            if len(above) == 1 and self._fast_first_receiver(g, owners, actor, value, stage, target):
                # value -> stage -> actor is a single-owner chain, so actor is
                # the sole root, and target's ancestors do not reach value
                owned = g._owned
                if value not in owned and self.mode is _FULL:
                    for a in self._actors.values():
                        a._readable.pop(value, None)
                        a._writable.pop(value, None)
                else:
                    self._invalidate(value)
                owners[value] = {target}
                kids = owned[stage]
                kids.discard(value)
                if not kids:
                    del owned[stage]
                kids = owned.get(target)
                if kids is None:
                    owned[target] = {value}
                else:
                    kids.add(value)
                if target in view._writable and self._trace is None:
                    dict.__setitem__(view._readable, value, OK)
                    dict.__setitem__(view._writable, value, OK)
                return result
            verdict = pass_verdict(g, actor, value, stage, target)
            if verdict is _ENABLED:
                self._invalidate(value)
                g.move_edge(stage, target, value)
                # actor was the sole root of value (premise) and is the sole
                # root of target if that is cached, so it stays sole root
                if target in view._writable and self._trace is None:
                    dict.__setitem__(view._readable, value, OK)
                    dict.__setitem__(view._writable, value, OK)
                return result
            moved = self._violation(verdict, actor, Pass(value, stage, target), n)
        return moved if result else result

    @staticmethod
    def _fast_first_receiver(g, owners, actor, value, stage, target) -> bool:
        """True when the pass premise plainly holds; False means "use pass_verdict"."""
        top = owners.get(stage)
        if top is None or len(top) != 1 or actor not in top or target not in g._entities:
            return False
        node = target
        for _ in range(64):
            if node == value:
                return False
            above = owners.get(node)
            if not above:
                return True
            if len(above) != 1:
                return False
            (node,) = above
        return False

    def spawn(self, actor: EntityId, body: Iterable[Statement] = (), name: str | None = None,
              *, staging: bool = True) -> EntityId:
        """``pi := spawn(body)`` plus, unless ``staging`` is false, the new
        process's staging resource.  Synchronization mechanisms never allocate
        and are spawned without one."""
        pid = self.new_id(Kind.PROCESS, name)
        if self.mode is Mode.NONE:
            return pid
        self.check(actor, Spawn(pid, tuple(body)))
        if not staging:
            return pid
        stage = self.new_id(Kind.RESOURCE, f"{self.name_of(pid)}_staging")
        self.check(pid, Allocate(stage, pid))
        self._staging[pid] = stage
        return pid

    def on_thread_start(self, actor: EntityId, thread_obj: EntityId, body: Iterable[Statement] = (),
                        name: str | None = None) -> EntityId:
        """Start of a thread object: spawn a process and give it the object."""
        pid = self.spawn(actor, body, name)
        self._context[pid] = thread_obj
        self.transfer(actor, thread_obj, pid)
        return pid

    def pass_to(self, actor: EntityId, res: EntityId, to: EntityId):
        """Pass ``res`` from its only direct owner to ``to``."""
        self.explicit_passes += 1
        return self.transfer(actor, res, to)

    def transfer(self, actor: EntityId, res: EntityId, to: EntityId):
        """Single-owner pass issued by ``actor``; not counted as explicit.

        Used by thread start and the synchronization adapters.
        """
        if self.mode is Mode.NONE:
            return OK
        with self._lock:
            owners = self._graph.owners_of(res)
            if len(owners) > 1:
                names = ", ".join(sorted(self.name_of(o) for o in owners))
                raise MultiOwnerError(f"{self.name_of(res)} has several direct owners ({names})")
            (old,) = owners if owners else (actor,)
            return self._serialized(actor, Pass(res, old, to), None)

    def mark_proxy(self, res: EntityId) -> None:
        self._proxies.add(res)

    def is_proxy(self, res: EntityId) -> bool:
        return res in self._proxies

    # -- lifecycle and reporting -----------------------------------------

    def terminate(self, pid: EntityId) -> None:
        """Record that a process finished; its edges stay in the graph."""
        self._terminated.add(pid)

    def leak_report(self) -> list[str]:
        """Resources whose only roots are terminated processes (informational)."""
        out = []
        with self._lock:
            g = self._graph
            for e in sorted(g.entities):
                if not e.is_resource:
                    continue
                found = G.find_roots(g, e).roots
                if found and found <= self._terminated:
                    roots = ", ".join(sorted(self.name_of(p) for p in found))
                    out.append(f"{self.name_of(e)} held only by terminated {roots}")
        return out

    def report(self) -> str:
        with self._lock:
            return "\n".join(v.text for v in self.violations)


def new_session(mode: Mode | str | None = None, **kwargs) -> Session:
    return Session(mode, **kwargs)
