"""Brute-force reference implementations used as test oracles.

Nothing here calls into somcheck's algorithms: roots come from a reachability
fixpoint, acyclicity from "some node reaches itself", and premises are
transcribed rule by rule on explicit candidate edge sets.
"""

from __future__ import annotations

from somcheck.graph import EntityId, Kind
from somcheck.semantics import Allocate, Pass, Read, Release, Share, Spawn, Write


def reach(edges: set, start) -> set:
    """Nodes reachable from ``start`` by one or more edges."""
    out = set()
    frontier = {start}
    while frontier:
        nxt = {b for (a, b) in edges if a in frontier} - out
        out |= nxt
        frontier = nxt
    return out


def acyclic(nodes, edges: set) -> bool:
    return all(n not in reach(edges, n) for n in set(nodes) | {x for e in edges for x in e})


def roots(nodes, edges: set, e) -> set:
    if e.kind is Kind.PROCESS:
        return {e}
    return {p for p in nodes if p.kind is Kind.PROCESS and e in reach(edges, p)}


def valid(nodes, edges: set) -> bool:
    """(P), (R), (A) and endpoint membership, checked directly."""
    nodes = set(nodes)
    if any(a not in nodes or b not in nodes for a, b in edges):
        return False
    if any(b.kind is Kind.PROCESS for _, b in edges):
        return False
    if any(n.kind is Kind.RESOURCE and not any(b == n for _, b in edges) for n in nodes):
        return False
    return acyclic(nodes, edges)


def premise(nodes, edges: set, actor, s, relaxed_release: bool = False) -> str:
    """Verdict name per rule, with precedence
    UnknownEntity > NoSuchEdge > NotRoot/NotSoleRoot > LastOwnerRelease > CycleWouldForm."""
    nodes = set(nodes)
    edges = set(edges)
    if actor not in nodes:
        return "UnknownEntity"
    if isinstance(s, (Spawn, Allocate)):
        bound = s.process if isinstance(s, Spawn) else s.resource
        if isinstance(s, Allocate) and s.owner not in nodes:
            return "UnknownEntity"
        return "Enabled" if bound not in nodes else "NotFresh"
    ops = {
        Read: lambda: (s.resource,),
        Write: lambda: (s.resource,),
        Pass: lambda: (s.resource, s.old_owner, s.new_owner),
        Share: lambda: (s.resource, s.owner),
        Release: lambda: (s.resource, s.owner),
    }[type(s)]()
    if any(e not in nodes for e in ops):
        return "UnknownEntity"
    if isinstance(s, (Read, Write)):
        r = roots(nodes, edges, s.resource)
        if actor not in r:
            return "NotRoot"
        if isinstance(s, Write) and r != {actor}:
            return "NotSoleRoot"
        return "Enabled"
    if isinstance(s, Pass):
        if (s.old_owner, s.resource) not in edges:
            return "NoSuchEdge"
        r = roots(nodes, edges, s.resource)
        if actor not in r:
            return "NotRoot"
        if r != {actor}:
            return "NotSoleRoot"
        cand = (edges - {(s.old_owner, s.resource)}) | {(s.new_owner, s.resource)}
        return "Enabled" if acyclic(nodes, cand) else "CycleWouldForm"
    if isinstance(s, Share):
        if actor not in roots(nodes, edges, s.resource):
            return "NotRoot"
        cand = edges | {(s.owner, s.resource)}
        return "Enabled" if acyclic(nodes, cand) else "CycleWouldForm"
    # Release
    if (s.owner, s.resource) not in edges:
        return "NoSuchEdge"
    r = roots(nodes, edges, s.owner)
    if actor not in r:
        return "NotRoot"
    if not relaxed_release and r != {actor}:
        return "NotSoleRoot"
    if not any(b == s.resource and a != s.owner for a, b in edges):
        return "LastOwnerRelease"
    return "Enabled"


def successor_edges(edges: set, s) -> set:
    edges = set(edges)
    if isinstance(s, Pass):
        return (edges - {(s.old_owner, s.resource)}) | {(s.new_owner, s.resource)}
    if isinstance(s, Share):
        return edges | {(s.owner, s.resource)}
    if isinstance(s, Release):
        return edges - {(s.owner, s.resource)}
    if isinstance(s, Allocate):
        return edges | {(s.owner, s.resource)}
    return edges


def all_statements(nodes, fresh_p: EntityId, fresh_r: EntityId) -> list:
    """Every statement over ``nodes`` (plus one fresh id of each kind)."""
    nodes = sorted(nodes)
    res = [n for n in nodes if n.kind is Kind.RESOURCE]
    out = []
    for r in res:
        out += [Read(r), Write(r)]
        for a in nodes:
            out += [Share(r, a), Release(r, a)]
            for b in nodes:
                out.append(Pass(r, a, b))
    out += [Spawn(fresh_p)] + [Spawn(p) for p in nodes if p.kind is Kind.PROCESS]
    for o in nodes:
        out.append(Allocate(fresh_r, o))
    if res:
        out.append(Allocate(res[0], nodes[0]))
    return out
