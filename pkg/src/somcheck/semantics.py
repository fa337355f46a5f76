"""SOM statements and their small-step transition rules.

Every statement has a premise over the current ownership graph.  The same
premise function backs both consumers: the explorer treats a failed premise
as *blocking* (no transition), the checker treats it as a failed assertion.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Union

from .graph import (
    EntityId,
    Kind,
    OwnershipGraph,
    chain_root,
    closes_cycle,
    find_roots,
)


def _need(e: EntityId, kind: Kind, role: str) -> None:
    if not isinstance(e, EntityId) or e.kind is not kind:
        raise TypeError(f"{role} must be a {kind.name.lower()} id, got {e!r}")


def _need_entity(e: EntityId, role: str) -> None:
    if not isinstance(e, EntityId):
        raise TypeError(f"{role} must be an EntityId, got {e!r}")


@dataclass(frozen=True)
class Read:
    resource: EntityId

    def __post_init__(self):
        _need(self.resource, Kind.RESOURCE, "read target")


@dataclass(frozen=True)
class Write:
    resource: EntityId

    def __post_init__(self):
        _need(self.resource, Kind.RESOURCE, "write target")


@dataclass(frozen=True)
class Pass:
    """Move the edge ``old_owner -> resource`` to ``new_owner -> resource``."""

    resource: EntityId
    old_owner: EntityId
    new_owner: EntityId

    def __post_init__(self):
        _need(self.resource, Kind.RESOURCE, "pass target")
        _need_entity(self.old_owner, "pass source")
        _need_entity(self.new_owner, "pass destination")


@dataclass(frozen=True)
class Share:
    """Add ``owner -> resource`` next to the existing owners."""

    resource: EntityId
    owner: EntityId

    def __post_init__(self):
        _need(self.resource, Kind.RESOURCE, "share target")
        _need_entity(self.owner, "share owner")


@dataclass(frozen=True)
class Release:
    """Drop ``owner -> resource``; another owner must remain."""

    resource: EntityId
    owner: EntityId

    def __post_init__(self):
        _need(self.resource, Kind.RESOURCE, "release target")
        _need_entity(self.owner, "release owner")


@dataclass(frozen=True)
class Spawn:
    process: EntityId
    body: tuple = ()

    def __post_init__(self):
        _need(self.process, Kind.PROCESS, "spawn binding")
        object.__setattr__(self, "body", tuple(self.body))


@dataclass(frozen=True)
class Allocate:
    resource: EntityId
    owner: EntityId

    def __post_init__(self):
        _need(self.resource, Kind.RESOURCE, "allocate binding")
        _need_entity(self.owner, "allocate owner")


Statement = Union[Read, Write, Pass, Share, Release, Spawn, Allocate]

#: statements whose transition can change who roots an existing resource
RIGHTS_CHANGING = (Pass, Share, Release)
MUTATING = (Pass, Share, Release, Spawn, Allocate)


def operands(s: Statement) -> tuple:
    """Entities a statement refers to, excluding fresh bindings."""
    if isinstance(s, (Read, Write)):
        return (s.resource,)
    if isinstance(s, Pass):
        return (s.resource, s.old_owner, s.new_owner)
    if isinstance(s, (Share, Release)):
        return (s.resource, s.owner)
    if isinstance(s, Allocate):
        return (s.owner,)
    return ()


def render_statement(s: Statement, name: Callable[[EntityId], str] = str) -> str:
    if isinstance(s, Read):
        return f"{name(s.resource)}.read"
    if isinstance(s, Write):
        return f"{name(s.resource)}.write"
    if isinstance(s, Pass):
        return f"{name(s.resource)}.pass({name(s.old_owner)}, {name(s.new_owner)})"
    if isinstance(s, Share):
        return f"{name(s.resource)}.share({name(s.owner)})"
    if isinstance(s, Release):
        return f"{name(s.resource)}.release({name(s.owner)})"
    if isinstance(s, Spawn):
        body = "; ".join(render_statement(t, name) for t in s.body)
        return f"{name(s.process)} := spawn({body})"
    if isinstance(s, Allocate):
        return f"{name(s.resource)} := {name(s.owner)}.allocate"
    raise TypeError(f"not a statement: {s!r}")


class Verdict(Enum):
    ENABLED = "Enabled"
    UNKNOWN_ENTITY = "UnknownEntity"
    NO_SUCH_EDGE = "NoSuchEdge"
    NOT_ROOT = "NotRoot"
    NOT_SOLE_ROOT = "NotSoleRoot"
    LAST_OWNER_RELEASE = "LastOwnerRelease"
    CYCLE_WOULD_FORM = "CycleWouldForm"
    NOT_FRESH = "NotFresh"

    def __bool__(self) -> bool:
        return self is Verdict.ENABLED

    def __str__(self) -> str:
        return self.value


ViolationKind = Verdict


class NotEnabled(RuntimeError):
    def __init__(self, verdict: Verdict, statement: Statement):
        super().__init__(f"{render_statement(statement)}: {verdict}")
        self.verdict = verdict
        self.statement = statement


def access_verdict(g: OwnershipGraph, actor: EntityId, res: EntityId, write: bool) -> tuple:
    """Premise of ``res.write`` (or ``res.read``) plus whether ``actor`` is the
    sole root, i.e. whether a write would be allowed as well."""
    ents = g._entities
    if actor not in ents or res not in ents:
        return Verdict.UNKNOWN_ENTITY, False
    top = chain_root(g, res)
    if top is not None:
        return (_ENABLED, True) if top == actor else (Verdict.NOT_ROOT, False)
    found = find_roots(g, res)
    roots = found.roots
    if actor not in roots:
        return Verdict.NOT_ROOT, False
    sole = len(roots) == 1
    if write and not sole:
        return Verdict.NOT_SOLE_ROOT, False
    if found.cycle:
        return Verdict.CYCLE_WOULD_FORM, False
    return Verdict.ENABLED, sole


def _root_verdict(g: OwnershipGraph, actor: EntityId, e: EntityId, sole: bool) -> Verdict:
    top = chain_root(g, e)
    if top is not None:
        return _ENABLED if top == actor else Verdict.NOT_ROOT
    found = find_roots(g, e)
    if actor not in found.roots:
        return Verdict.NOT_ROOT
    if sole and len(found.roots) != 1:
        return Verdict.NOT_SOLE_ROOT
    if found.cycle:
        # a cyclic graph is reported where the walk meets it
        return Verdict.CYCLE_WOULD_FORM
    return Verdict.ENABLED


_UNKNOWN = Verdict.UNKNOWN_ENTITY
_ENABLED = Verdict.ENABLED


def _p_read(g, actor, s, relaxed):
    return access_verdict(g, actor, s.resource, False)[0]


def _p_write(g, actor, s, relaxed):
    return access_verdict(g, actor, s.resource, True)[0]


def pass_verdict(g: OwnershipGraph, actor: EntityId, res: EntityId, old: EntityId, new: EntityId) -> Verdict:
    """Premise of ``res.pass(old, new)`` on raw operands (no Statement built)."""
    ents = g._entities
    if actor not in ents or res not in ents or old not in ents or new not in ents:
        return _UNKNOWN
    if old not in g._owners.get(res, ()):
        return Verdict.NO_SUCH_EDGE
    v = _root_verdict(g, actor, res, sole=True)
    if v is not _ENABLED:
        return v
    # the root walk above met no cycle, and the walk below only needs
    # acyclicity among the ancestors of the new owner; it stops on reaching
    # ``res``, so the dropped edge old -> res never matters
    if closes_cycle(g, new, res):
        return Verdict.CYCLE_WOULD_FORM
    return _ENABLED


def allocate_verdict(g: OwnershipGraph, actor: EntityId, res: EntityId, owner: EntityId) -> Verdict:
    ents = g._entities
    if actor not in ents or owner not in ents:
        return _UNKNOWN
    return _ENABLED if res not in ents else Verdict.NOT_FRESH


def _p_pass(g, actor, s, relaxed):
    return pass_verdict(g, actor, s.resource, s.old_owner, s.new_owner)


def _p_share(g, actor, s, relaxed):
    ents = g._entities
    if s.resource not in ents or s.owner not in ents:
        return _UNKNOWN
    v = _root_verdict(g, actor, s.resource, sole=False)
    if v is not _ENABLED:
        return v
    if closes_cycle(g, s.owner, s.resource):
        return Verdict.CYCLE_WOULD_FORM
    return _ENABLED


def _p_release(g, actor, s, relaxed):
    ents = g._entities
    if s.resource not in ents or s.owner not in ents:
        return _UNKNOWN
    owners = g._owners.get(s.resource, ())
    if s.owner not in owners:
        return Verdict.NO_SUCH_EDGE
    v = _root_verdict(g, actor, s.owner, sole=not relaxed)
    if v is not _ENABLED:
        return v
    if len(owners) < 2:
        return Verdict.LAST_OWNER_RELEASE
    return _ENABLED


def _p_spawn(g, actor, s, relaxed):
    return _ENABLED if s.process not in g._entities else Verdict.NOT_FRESH


def _p_allocate(g, actor, s, relaxed):
    return allocate_verdict(g, actor, s.resource, s.owner)


_PREMISES = {
    Read: _p_read,
    Write: _p_write,
    Pass: _p_pass,
    Share: _p_share,
    Release: _p_release,
    Spawn: _p_spawn,
    Allocate: _p_allocate,
}


def premise(g: OwnershipGraph, actor: EntityId, s: Statement, *, relaxed_release: bool = False) -> Verdict:
    """Evaluate the side condition of the rule matching ``s``.

    When several conjuncts fail the most structural one is reported:
    UnknownEntity, then NoSuchEdge, then NotRoot/NotSoleRoot, then
    LastOwnerRelease, then CycleWouldForm.

    ``relaxed_release`` requires only that ``actor`` be *a* root of the
    releasing owner instead of its sole root.
    """
    rule = _PREMISES.get(type(s))
    if rule is None:
        raise TypeError(f"not a statement: {s!r}")
    if actor not in g._entities:
        return _UNKNOWN
    return rule(g, actor, s, relaxed_release)


def _m_none(g, s):
    pass


def _m_pass(g, s):
    g.delete_edge(s.old_owner, s.resource)
    g.insert_edge(s.new_owner, s.resource)


def _m_share(g, s):
    g.insert_edge(s.owner, s.resource)


def _m_release(g, s):
    g.delete_edge(s.owner, s.resource)


def _m_spawn(g, s):
    g._entities.add(s.process)


def _m_allocate(g, s):
    g._entities.add(s.resource)
    g.insert_edge(s.owner, s.resource)


_MUTATORS = {
    Read: _m_none,
    Write: _m_none,
    Pass: _m_pass,
    Share: _m_share,
    Release: _m_release,
    Spawn: _m_spawn,
    Allocate: _m_allocate,
}


def mutate(g: OwnershipGraph, s: Statement) -> None:
    """Apply the conclusion of ``s`` to ``g`` in place, without its premise."""
    m = _MUTATORS.get(type(s))
    if m is None:
        raise TypeError(f"not a statement: {s!r}")
    m(g, s)


def apply(g: OwnershipGraph, actor: EntityId, s: Statement, *, relaxed_release: bool = False) -> OwnershipGraph:
    """The graph after ``actor`` executes ``s``; ``g`` itself is untouched."""
    v = premise(g, actor, s, relaxed_release=relaxed_release)
    if v is not Verdict.ENABLED:
        raise NotEnabled(v, s)
    if isinstance(s, (Read, Write)):
        return g
    h = g.copy()
    mutate(h, s)
    return h


class Configuration:
    """Remaining program of every process, paired with the graph."""

    __slots__ = ("processes", "graph", "_key")

    def __init__(self, processes: Mapping[EntityId, tuple], graph: OwnershipGraph):
        self.processes = {p: tuple(prog) for p, prog in processes.items()}
        self.graph = graph
        self._key = None

    def key(self) -> tuple:
        if self._key is None:
            procs = tuple(sorted(self.processes.items()))
            self._key = (procs, self.graph.key())
        return self._key

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def is_terminal(self) -> bool:
        return all(not prog for prog in self.processes.values())

    def __repr__(self) -> str:
        running = sum(1 for prog in self.processes.values() if prog)
        return f"Configuration({len(self.processes)} processes, {running} running, {self.graph!r})"


def enabled_steps(c: Configuration, *, relaxed_release: bool = False) -> list:
    """All ``(process, statement, successor)`` triples, ordered by process id."""
    out = []
    for pid in sorted(c.processes):
        prog = c.processes[pid]
        if not prog:
            continue
        head = prog[0]
        if premise(c.graph, pid, head, relaxed_release=relaxed_release) is not Verdict.ENABLED:
            continue
        if isinstance(head, (Read, Write)):
            graph = c.graph
        else:
            graph = c.graph.copy()
            mutate(graph, head)
        procs = dict(c.processes)
        procs[pid] = prog[1:]
        if isinstance(head, Spawn):
            procs[head.process] = head.body
        out.append((pid, head, Configuration(procs, graph)))
    return out
