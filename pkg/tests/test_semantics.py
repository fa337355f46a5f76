from __future__ import annotations

import random

import pytest

import oracle
from somcheck import graph as G
from somcheck.graph import OwnershipGraph, process, resource
from somcheck.semantics import (
    Allocate,
    Configuration,
    NotEnabled,
    Pass,
    Read,
    Release,
    Share,
    Spawn,
    Verdict,
    Write,
    apply,
    enabled_steps,
    premise,
    render_statement,
)

p1, p2, p3 = process(1), process(2), process(3)
r = {i: resource(i) for i in range(1, 12)}


def fig2():
    return OwnershipGraph([p1, p2, r[1], r[2], r[3], r[4]],
                          [(p1, r[1]), (r[1], r[3]), (r[1], r[4]), (p2, r[2]), (r[2], r[4])])


def fig3a():
    return OwnershipGraph([p1, p2] + [r[i] for i in range(1, 7)],
                          [(p2, r[3]), (p1, r[2]), (p1, r[1]), (r[3], r[6]), (r[2], r[5]), (r[2], r[4])])


def fig4a():
    return OwnershipGraph([p1, p2] + [r[i] for i in range(1, 6)],
                          [(p2, r[2]), (p1, r[1]), (r[2], r[5]), (r[2], r[4]), (r[1], r[3])])


def test_shared_resource_is_readable_not_writable():
    g = fig2()
    assert premise(g, p1, Write(r[4])) is Verdict.NOT_SOLE_ROOT
    assert premise(g, p1, Read(r[4])) is Verdict.ENABLED
    assert premise(g, p2, Read(r[4])) is Verdict.ENABLED
    assert premise(g, p2, Read(r[3])) is Verdict.NOT_ROOT
    assert premise(g, p1, Write(r[3])) is Verdict.ENABLED


def test_pass_figure():
    g = fig3a()
    s = Pass(r[2], p1, p2)
    assert premise(g, p1, s) is Verdict.ENABLED
    h = apply(g, p1, s)
    want = fig3a()
    want.delete_edge(p1, r[2])
    want.insert_edge(p2, r[2])
    assert h == want
    assert G.root_of(h, r[5]) == {p2}


def test_share_figure():
    g = fig4a()
    s = Share(r[1], r[2])
    assert premise(g, p1, s) is Verdict.ENABLED
    h = apply(g, p1, s)
    assert h.edges == g.edges | {G.Edge(r[2], r[1])}
    assert G.root_of(h, r[3]) == {p1, p2}


def test_share_that_closes_a_loop():
    pi, a, b = process(0), r[1], r[2]
    g = OwnershipGraph([pi, a, b], [(pi, a), (pi, b), (a, b)])
    assert premise(g, pi, Share(a, b)) is Verdict.CYCLE_WOULD_FORM


def test_release_of_last_owner():
    pi, a = process(0), r[1]
    g = OwnershipGraph([pi, a], [(pi, a)])
    assert premise(g, pi, Release(a, pi)) is Verdict.LAST_OWNER_RELEASE


def test_read_leaves_graph_alone():
    g = fig2()
    assert apply(g, p1, Read(r[4])) == g


# one witness per verdict, each checked against the oracle too
WITNESSES = [
    (Verdict.ENABLED, fig2, p1, Read(r[3])),
    (Verdict.UNKNOWN_ENTITY, fig2, p1, Read(r[9])),
    (Verdict.UNKNOWN_ENTITY, fig2, p3, Read(r[3])),
    (Verdict.NO_SUCH_EDGE, fig2, p1, Pass(r[3], p2, p1)),
    (Verdict.NOT_ROOT, fig2, p2, Pass(r[3], r[1], p2)),
    (Verdict.NOT_SOLE_ROOT, fig2, p1, Write(r[4])),
    (Verdict.LAST_OWNER_RELEASE, fig2, p1, Release(r[3], r[1])),
    (Verdict.CYCLE_WOULD_FORM, fig2, p1, Pass(r[1], p1, r[3])),
    (Verdict.NOT_FRESH, fig2, p1, Allocate(r[3], p1)),
    (Verdict.NOT_FRESH, fig2, p1, Spawn(p2)),
]


@pytest.mark.parametrize("want,make,actor,s", WITNESSES, ids=lambda x: str(x) if isinstance(x, Verdict) else None)
def test_every_verdict_has_a_witness(want, make, actor, s):
    g = make()
    assert premise(g, actor, s) is want
    assert oracle.premise(g.entities, {tuple(e) for e in g.edges}, actor, s) == want.value


def test_witnesses_cover_all_verdicts():
    assert {w[0] for w in WITNESSES} == set(Verdict)


def test_precedence_unknown_over_no_edge_over_roots():
    g = fig2()
    # unknown operand wins even though the edge is also missing
    assert premise(g, p1, Pass(r[3], p3, p1)) is Verdict.UNKNOWN_ENTITY
    # missing edge wins over p2 not being a root
    assert premise(g, p2, Pass(r[3], p2, p1)) is Verdict.NO_SUCH_EDGE
    # not sole root wins over the cycle the pass would form
    assert premise(g, p1, Pass(r[4], r[1], r[4])) is Verdict.NOT_SOLE_ROOT


def test_release_rule_and_relaxed_reading():
    g = fig2()
    g.insert_edge(r[2], r[3])  # r3 now has two owners; r1 is rooted in p1 only
    assert premise(g, p1, Release(r[3], r[1])) is Verdict.ENABLED
    # the owner r4 has roots p1 and p2: the rule needs the sole root
    g.insert_edge(r[4], r[3])
    s = Release(r[3], r[4])
    assert premise(g, p1, s) is Verdict.NOT_SOLE_ROOT
    assert premise(g, p1, s, relaxed_release=True) is Verdict.ENABLED


def test_apply_refuses_disabled_statement():
    with pytest.raises(NotEnabled):
        apply(fig2(), p1, Write(r[4]))


def test_statement_operands_are_kind_checked():
    with pytest.raises(TypeError):
        Read(p1)
    with pytest.raises(TypeError):
        Spawn(r[1])
    with pytest.raises(TypeError):
        Pass(r[1], "p1", p2)


def test_render_statement():
    assert render_statement(Pass(r[2], p1, p2)) == "r2.pass(p1, p2)"
    assert render_statement(Allocate(r[5], p1)) == "r5 := p1.allocate"
    assert render_statement(Spawn(p3, (Read(r[1]),))) == "p3 := spawn(r1.read)"


def _random_valid(rng, n_proc, n_res):
    order = [process(i) for i in range(n_proc)] + [resource(i) for i in range(n_res)]
    g = OwnershipGraph(order)
    for k in range(n_proc, len(order)):
        earlier = order[:k]
        g.insert_edge(rng.choice(earlier), order[k])
        for e in earlier:
            if rng.random() < 0.25:
                g.insert_edge(e, order[k])
    return g


def lemma_trials(n: int, seed: int = 7) -> tuple[int, int, int]:
    """(trials, enabled, failures): random graph with <= 8 nodes, random statement."""
    rng = random.Random(seed)
    enabled = failures = 0
    for _ in range(n):
        n_proc = rng.randint(1, 3)
        g = _random_valid(rng, n_proc, rng.randint(1, 8 - n_proc))
        ents = sorted(g.entities)
        stmts = oracle.all_statements(ents, process(99), resource(99))
        actor = rng.choice([e for e in ents if e.is_process])
        s = rng.choice(stmts)
        edges = {tuple(e) for e in g.edges}
        want = oracle.premise(ents, edges, actor, s)
        got = premise(g, actor, s)
        if got.value != want:
            failures += 1
            continue
        if got is Verdict.ENABLED:
            enabled += 1
            before = g.copy()
            h = apply(g, actor, s)
            if g != before or not G.is_ownership_graph(h):
                failures += 1
            nodes = set(ents) | ({s.process} if isinstance(s, Spawn) else set())
            nodes |= {s.resource} if isinstance(s, Allocate) else set()
            if h.entities != nodes or {tuple(e) for e in h.edges} != oracle.successor_edges(edges, s):
                failures += 1
    return n, enabled, failures


def test_lemma_random_trials():
    n, enabled, failures = lemma_trials(10_000)
    assert failures == 0
    assert enabled > 1000  # the trials exercise real transitions


def test_premise_is_pure_and_deterministic():
    g = fig3a()
    before = g.copy()
    for s in oracle.all_statements(sorted(g.entities), process(9), resource(9)):
        a = premise(g, p1, s)
        assert premise(g, p1, s) is a
    assert g == before


def test_enabled_steps_examples():
    shared = resource(1)
    g = OwnershipGraph([p1, p2, shared], [(p1, shared), (p2, shared)])
    c = Configuration({p1: (Read(shared),), p2: (Read(shared),)}, g)
    assert [pid for pid, _, _ in enabled_steps(c)] == [p1, p2]
    c = Configuration({p1: (Write(shared),), p2: ()}, g)
    assert enabled_steps(c) == []
    assert enabled_steps(Configuration({p1: ()}, OwnershipGraph([p1]))) == []


def test_enabled_steps_spawn_adds_child():
    child = process(5)
    c = Configuration({p1: (Spawn(child, (Allocate(resource(3), child),)),)}, OwnershipGraph([p1]))
    ((pid, s, nxt),) = enabled_steps(c)
    assert nxt.processes[child] == (Allocate(resource(3), child),)
    assert child in nxt.graph
    ((_, _, last),) = [step for step in enabled_steps(nxt) if step[0] == child]
    assert last.is_terminal()
