"""Ownership graphs over processes and resources.

An ownership graph is a directed graph whose edges read "owner -> owned".
A well-formed graph satisfies three properties:

* (P) no process has an incoming edge,
* (R) every resource has at least one incoming edge,
* (A) the graph is acyclic.

A process is a *root* of a resource when the resource is reachable from it.
A sole root may write; any root may read.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, Mapping, NamedTuple


class Kind(IntEnum):
    PROCESS = 0
    RESOURCE = 1


_PROCESS = Kind.PROCESS


class EntityId(NamedTuple):
    kind: Kind
    id: int

    @property
    def is_process(self) -> bool:
        return self.kind is Kind.PROCESS

    @property
    def is_resource(self) -> bool:
        return self.kind is Kind.RESOURCE

    def __str__(self) -> str:
        return f"{'p' if self.kind is Kind.PROCESS else 'r'}{self.id}"


def process(i: int) -> EntityId:
    return EntityId(Kind.PROCESS, i)


def resource(i: int) -> EntityId:
    return EntityId(Kind.RESOURCE, i)


class Edge(NamedTuple):
    owner: EntityId
    owned: EntityId

    def __str__(self) -> str:
        return f"{self.owner} -> {self.owned}"


class GraphError(Exception):
    """Base class for ownership graph errors."""


class UnknownEntity(GraphError, KeyError):
    def __init__(self, entity: EntityId):
        super().__init__(entity)
        self.entity = entity

    def __str__(self) -> str:
        return f"unknown entity {self.entity}"


class ProcessAsTarget(GraphError, ValueError):
    """An edge would point at a process, breaking property (P)."""


class NoSuchEdge(GraphError, KeyError):
    def __init__(self, owner: EntityId, owned: EntityId):
        super().__init__((owner, owned))
        self.edge = Edge(owner, owned)

    def __str__(self) -> str:
        return f"no edge {self.edge}"


class CycleDetected(GraphError):
    """Root search walked around a cycle; ``roots`` holds what was found anyway."""

    def __init__(self, entity: EntityId, roots: frozenset):
        super().__init__(f"cycle above {entity}")
        self.entity = entity
        self.roots = roots


class InvalidGraph(GraphError, ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class RootSearch(NamedTuple):
    roots: frozenset
    cycle: bool


class OwnershipGraph:
    """Entity set plus an edge set, indexed in both directions.

    The constructor accepts arbitrary edges (including ones that break the
    ownership properties) so that malformed graphs can be diagnosed with
    :func:`problems`.  The ``insert_*``/``delete_edge`` methods mutate in place
    and perform no property checks; the module-level functions
    :func:`add_edge` and :func:`remove_edge` are the checked, copying variants.
    """

    __slots__ = ("_entities", "_owners", "_owned")

    def __init__(self, entities: Iterable[EntityId] = (), edges: Iterable[tuple] = ()):
        self._entities: set[EntityId] = set(entities)
        self._owners: dict[EntityId, set[EntityId]] = {}
        self._owned: dict[EntityId, set[EntityId]] = {}
        for owner, owned in edges:
            self.insert_edge(owner, owned)

    # -- queries ----------------------------------------------------------

    @property
    def entities(self) -> frozenset:
        return frozenset(self._entities)

    @property
    def edges(self) -> frozenset:
        return frozenset(Edge(o, e) for e, os in self._owners.items() for o in os)

    def __contains__(self, entity: object) -> bool:
        return entity in self._entities

    def __len__(self) -> int:
        return len(self._entities)

    def owners_of(self, entity: EntityId) -> frozenset:
        return frozenset(self._owners.get(entity, ()))

    def owned_by(self, entity: EntityId) -> frozenset:
        return frozenset(self._owned.get(entity, ()))

    def has_edge(self, owner: EntityId, owned: EntityId) -> bool:
        return owner in self._owners.get(owned, ())

    def edge_count(self) -> int:
        return sum(len(s) for s in self._owners.values())

    def key(self) -> tuple:
        """Canonical hashable form: sorted entities and sorted edges."""
        return tuple(sorted(self._entities)), tuple(sorted(self.edges))

    def copy(self) -> OwnershipGraph:
        g = OwnershipGraph.__new__(OwnershipGraph)
        g._entities = set(self._entities)
        g._owners = {k: set(v) for k, v in self._owners.items() if v}
        g._owned = {k: set(v) for k, v in self._owned.items() if v}
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OwnershipGraph):
            return NotImplemented
        return self._entities == other._entities and self.edges == other.edges

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        edges = ", ".join(str(e) for e in sorted(self.edges))
        return f"OwnershipGraph({len(self._entities)} entities: {edges})"

    # -- in-place mutation ----------------------------------------------

    def insert_entity(self, entity: EntityId) -> None:
        self._entities.add(entity)

    def insert_edge(self, owner: EntityId, owned: EntityId) -> None:
        self._owners.setdefault(owned, set()).add(owner)
        self._owned.setdefault(owner, set()).add(owned)

    def move_edge(self, old: EntityId, new: EntityId, owned: EntityId) -> None:
        """``delete_edge(old, owned)`` then ``insert_edge(new, owned)``."""
        self.delete_edge(old, owned)
        self._owners.setdefault(owned, set()).add(new)
        self._owned.setdefault(new, set()).add(owned)

    def delete_edge(self, owner: EntityId, owned: EntityId) -> None:
        owners = self._owners.get(owned)
        if not owners or owner not in owners:
            raise NoSuchEdge(owner, owned)
        owners.discard(owner)
        if not owners:
            del self._owners[owned]
        children = self._owned[owner]
        children.discard(owned)
        if not children:
            del self._owned[owner]


def chain_root(g: OwnershipGraph, e: EntityId, limit: int = 64):
    """The process atop a chain of single owners above resource ``e``, if any.

    None when some entity on the way has zero or several owners, or the chain
    is longer than ``limit``; callers then fall back to :func:`find_roots`.
    """
    owners = g._owners
    node = e
    for _ in range(limit):
        above = owners.get(node)
        if not above or len(above) != 1:
            return None
        (node,) = above
        if node[0] is _PROCESS:
            return node
        if node == e:
            return None
    return None


def find_roots(g: OwnershipGraph, e: EntityId) -> RootSearch:
    """Walk from ``e`` against edge direction collecting processes.

    Uses a DFS with an on-path set so a corrupt (cyclic) graph terminates;
    ``cycle`` is set when the walk re-enters a node on the current path.
    """
    if e not in g._entities:
        raise UnknownEntity(e)
    if e.kind is Kind.PROCESS:
        return RootSearch(frozenset((e,)), False)
    top = chain_root(g, e)
    if top is not None:
        return RootSearch(frozenset((top,)), False)
    owners = g._owners
    roots = set()
    cycle = False
    done: set[EntityId] = set()
    on_path = {e}
    stack = [(e, iter(owners.get(e, ())))]
    while stack:
        node, it = stack[-1]
        for parent in it:
            if parent.kind is Kind.PROCESS:
                roots.add(parent)
            elif parent in on_path:
                cycle = True
            elif parent not in done:
                on_path.add(parent)
                stack.append((parent, iter(owners.get(parent, ()))))
                break
        else:
            stack.pop()
            on_path.discard(node)
            done.add(node)
    return RootSearch(frozenset(roots), cycle)


def root_of(g: OwnershipGraph, e: EntityId) -> frozenset:
    """Processes from which ``e`` is reachable (``{e}`` for a process)."""
    found = find_roots(g, e)
    if found.cycle:
        raise CycleDetected(e, found.roots)
    return found.roots


def _all_nodes(g: OwnershipGraph) -> set:
    nodes = set(g._entities)
    nodes.update(g._owners)
    nodes.update(g._owned)
    return nodes


def is_acyclic(g: OwnershipGraph, *, add: Edge | None = None, drop: Edge | None = None) -> bool:
    """True iff the edge relation has no directed cycle.

    ``add``/``drop`` evaluate a candidate graph with one edge inserted and/or
    removed, without copying ``g``.
    """
    edges = {(o, e) for e, os in g._owners.items() for o in os}
    if drop is not None:
        edges.discard(tuple(drop))
    if add is not None:
        edges.add(tuple(add))
    indegree: dict[EntityId, int] = {n: 0 for n in _all_nodes(g)}
    children: dict[EntityId, list] = {}
    for owner, owned in edges:
        children.setdefault(owner, []).append(owned)
        indegree.setdefault(owner, 0)
        indegree[owned] = indegree.get(owned, 0) + 1
    ready = [n for n, d in indegree.items() if d == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for k in children.get(n, ()):
            indegree[k] -= 1
            if indegree[k] == 0:
                ready.append(k)
    return seen == len(indegree)


def closes_cycle(g: OwnershipGraph, owner: EntityId, owned: EntityId, *, drop: Edge | None = None) -> bool:
    """Would inserting ``owner -> owned`` (with ``drop`` removed) create a cycle?

    Only the ancestors of ``owner`` are visited, so this is cheap for the
    shallow graphs real programs build.  The answer equals
    ``not is_acyclic(g, add=..., drop=...)`` whenever ``g`` is acyclic.
    """
    if owner == owned:
        return True
    owners = g._owners
    if drop is not None and drop.owned == owned:
        # the walk stops on reaching ``owned``, so it never follows this edge
        drop = None
    if drop is None:
        # fast path: a chain of single owners
        node = owner
        for _ in range(64):
            above = owners.get(node)
            if not above:
                return False
            if len(above) != 1:
                break
            (node,) = above
            if node == owned:
                return True
    seen = {owner}
    stack = [owner]
    while stack:
        node = stack.pop()
        for parent in owners.get(node, ()):
            if drop is not None and parent == drop.owner and node == drop.owned:
                continue
            if parent == owned:
                return True
            if parent not in seen:
                seen.add(parent)
                stack.append(parent)
    return False


def fresh(g: OwnershipGraph, e: EntityId) -> bool:
    return e not in g._entities


def add_edge(g: OwnershipGraph, owner: EntityId, owned: EntityId) -> OwnershipGraph:
    """Copy of ``g`` with ``owner -> owned`` inserted. Acyclicity is not checked."""
    for e in (owner, owned):
        if e not in g._entities:
            raise UnknownEntity(e)
    if owned.kind is Kind.PROCESS:
        raise ProcessAsTarget(f"{owner} -> {owned}: processes cannot be owned")
    h = g.copy()
    h.insert_edge(owner, owned)
    return h


def remove_edge(g: OwnershipGraph, owner: EntityId, owned: EntityId) -> OwnershipGraph:
    """Copy of ``g`` without ``owner -> owned``. Property (R) is not checked."""
    if not g.has_edge(owner, owned):
        raise NoSuchEdge(owner, owned)
    h = g.copy()
    h.delete_edge(owner, owned)
    return h


def problems(g: OwnershipGraph, names: Mapping[EntityId, str] | None = None) -> list[str]:
    """Every breach of (P), (R), (A) and endpoint membership, as text."""
    name = (lambda e: names.get(e, str(e))) if names else str
    out = []
    for edge in sorted(g.edges):
        for end in edge:
            if end not in g._entities:
                out.append(f"endpoint {name(end)} of {name(edge.owner)} -> {name(edge.owned)} is not an entity")
    for e in sorted(g._entities):
        incoming = g._owners.get(e)
        if e.kind is Kind.PROCESS and incoming:
            owners = ", ".join(name(o) for o in sorted(incoming))
            out.append(f"(P) process {name(e)} has incoming edge from {owners}")
        if e.kind is Kind.RESOURCE and not incoming:
            out.append(f"(R) resource {name(e)} has no owner")
    if not is_acyclic(g):
        out.append("(A) graph contains a cycle")
    return out


def is_ownership_graph(g: OwnershipGraph) -> bool:
    """Same answer as ``not problems(g)``, without building any text."""
    ents = g._entities
    for owned, owners in g._owners.items():
        if not owners:
            continue
        if owned not in ents or owned[0] is _PROCESS:
            return False
        for o in owners:
            if o not in ents:
                return False
    owners_of = g._owners
    for e in ents:
        if e[0] is not _PROCESS and not owners_of.get(e):
            return False
    return is_acyclic(g)


def validate(g: OwnershipGraph) -> None:
    if is_ownership_graph(g):
        return
    found = problems(g)
    if found:
        raise InvalidGraph(found)


def render(g: OwnershipGraph, names: Mapping[EntityId, str] | None = None) -> str:
    """One ``owner -> owned`` line per edge, ordered by (kind, id)."""
    name = (lambda e: names.get(e, str(e))) if names else str
    return "\n".join(f"{name(a)} -> {name(b)}" for a, b in sorted(g.edges))
