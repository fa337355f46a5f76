from __future__ import annotations

import json
import random

import pytest

from somcheck import graph as G
from somcheck import semantics
from somcheck.explorer import (
    InvalidInitialGraph,
    LimitExceeded,
    ParseError,
    UndeclaredName,
    bundled_programs,
    check_deadlock,
    explore,
    load,
    parse,
    races,
)
from somcheck.semantics import Pass, Read, Spawn, Verdict, Write, enabled_steps

PROGRAMS = bundled_programs()
ALL_KINDS = {"read", "write", "pass", "share", "release", "spawn", "allocate"}


def run(name, **kw):
    return explore(load(PROGRAMS[name]), **kw)


# -- parsing --------------------------------------------------------------------


def test_empty_program():
    p = parse("")
    assert p.processes == {} and len(p.initial) == 0
    assert explore(p).states == 1


def test_comments_and_whitespace_are_ignored():
    a = parse("process main { x := main.allocate; x.read; x.write }")
    b = parse("# header\nprocess   main {\n  x := main.allocate   # fresh\n  x.read\n\n  x.write\n}\n")
    assert a.processes == b.processes


def error(text, cls=ParseError):
    with pytest.raises(cls) as info:
        parse(text)
    return info.value


def test_arity_error_has_location():
    e = error("process main {\n  x := main.allocate\n  x.pass(main)\n}")
    assert (e.line, e.col) == (3, 5)
    assert "pass takes 2 arguments" in e.reason


def test_parse_errors():
    assert "unknown operation" in error("process m { x := m.allocate; x.fly }").reason
    assert "unterminated" in error("process m { x := m.allocate").reason
    assert "unexpected character" in error("process m { x@ }").reason
    assert "reserved" in error("process spawn { }").reason
    assert "top level" in error("x.read").reason
    assert "more than once" in error("process m { } process m { }").reason
    e = error("process m {\n  repeat 4 { m.read }\n}")
    assert "exceeds the bound 3" in e.reason and e.line == 2
    assert "not a resource" in error("process a { } process b { } b.share(a)").reason


def test_undeclared_name():
    e = error("process main {\n    ghost.read\n}", UndeclaredName)
    assert e.name == "ghost" and (e.line, e.col) == (2, 5)


def test_process_operand_in_resource_position():
    assert error("process m { m.read }").line == 1


def test_invalid_initial_graph_names_the_property():
    with pytest.raises(InvalidInitialGraph) as info:
        parse("resource orphan\nprocess main { }")
    assert info.value.problems == ["(R) resource orphan has no owner"]


def test_top_level_declarations_build_the_initial_graph():
    p = parse("resource list\nlist.share(main)\nbuf := main.allocate\nprocess main { list.read; buf.write }")
    assert G.render(p.initial, p.names).splitlines() == ["main -> list", "main -> buf"]
    assert explore(p).ok


def test_repeat_unrolls_with_fresh_names():
    p = parse("process m { repeat 3 { x := m.allocate; x.write } }")
    (prog,) = p.processes.values()
    assert len(prog) == 6
    assert [p.name_of(s.resource) for s in prog if isinstance(s, Write)] == ["x_0", "x_1", "x_2"]
    bigger = parse("process m { repeat 5 { m_r := m.allocate } }", repeat_bound=5)
    assert len(next(iter(bigger.processes.values()))) == 5


def test_pipeline_has_three_workers_and_three_channels():
    p = load(PROGRAMS["pipeline"])
    names = sorted(p.name_of(pid) for pid in p.processes)
    assert names == ["c0", "c1", "c2", "main", "s1", "s2"]
    assert len([n for n in names if not n.startswith("c")]) == 3


# -- exploration ------------------------------------------------------------------


EXPECTED_STATES = {
    "llsplit": 14,
    "llsplit_race": 27,
    "pingpong": 26,
    "pipeline": 75,
    "queue": 70,
    "rwlock": 30,
}


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_bundled_programs_are_race_free(name):
    report = run(name)
    assert report.witnesses == []
    assert report.lemma_failures == []
    assert report.states == EXPECTED_STATES[name]
    assert report.complete
    assert report.states > 1


def test_bundled_programs_cover_every_statement_kind():
    kinds = set()
    for path in PROGRAMS.values():
        kinds |= load(path).statement_kinds()
    assert kinds == ALL_KINDS


def test_split_race_deadlocks_instead():
    report = run("llsplit_race")
    (dead,) = check_deadlock(report)
    blocked = report._blocked(dead)
    assert set(blocked) == {"t1", "t2"}
    assert all(s.startswith("n1.pass") for s in blocked.values())
    assert run("pipeline").deadlocks == []


def test_two_writers_on_a_shared_resource_deadlock():
    p = parse("x := a.allocate\nx.share(b)\nprocess a { x.write }\nprocess b { x.write }")
    report = explore(p)
    assert report.ok
    assert len(check_deadlock(report)) == 1
    assert report.states == 1


def test_terminal_state_is_not_a_deadlock():
    report = explore(parse("process a { x := a.allocate; x.write }"))
    assert report.deadlocks == []
    assert report.states == 3


def test_single_process_cannot_race():
    report = explore(parse("process a { x := a.allocate; x.write; x.read; x.write }"))
    assert report.witnesses == []


def test_limit_exceeded_carries_partial_report():
    with pytest.raises(LimitExceeded) as info:
        run("pipeline", max_states=10)
    report = info.value.report
    assert not report.complete
    assert report.states <= 10
    assert "(limit reached, partial)" in report.render()


def test_exploration_is_deterministic():
    for name in PROGRAMS:
        a, b = run(name), run(name)
        assert (a.states, a.transitions) == (b.states, b.transitions)
        assert a.render() == b.render()
        assert a.dumps() == b.dumps()


def test_json_report_shape():
    data = json.loads(run("llsplit_race").dumps())
    assert list(data) == ["states", "witnesses", "lemma_failures", "deadlocks"]
    assert data["states"] == 27
    assert data["deadlocks"][0]["blocked"] == {"t1": "n1.pass(list, res1)", "t2": "n1.pass(list, res2)"}


def test_relaxed_release_is_passed_through():
    # x is rooted in both a and b, so only the relaxed reading lets a release y from x
    src = "x := a.allocate\nx.share(b)\ny := x.allocate\ny.share(b)\nprocess a { y.release(x) }\nprocess b { }"
    strict = explore(parse(src))
    assert strict.states == 1 and len(strict.deadlocks) == 1
    relaxed = explore(parse(src), relaxed_release=True)
    assert relaxed.states == 2 and relaxed.deadlocks == []


# -- the oracle finds what it should -------------------------------------------------


def _weak_write(g, actor, s, relaxed):
    # any root may write: shared readers can now write concurrently
    return semantics.access_verdict(g, actor, s.resource, False)[0]


def _share_without_cycle_check(g, actor, s, relaxed):
    ents = g._entities
    if s.resource not in ents or s.owner not in ents:
        return Verdict.UNKNOWN_ENTITY
    return Verdict.ENABLED if actor in G.root_of(g, s.resource) else Verdict.NOT_ROOT


def test_broken_write_rule_shows_races(monkeypatch):
    monkeypatch.setitem(semantics._PREMISES, Write, _weak_write)
    report = explore(parse("x := a.allocate\nx.share(b)\nprocess a { x.write }\nprocess b { x.read; x.write }"))
    assert report.witnesses
    kinds = {w.kinds for w in report.witnesses}
    assert ("write", "read") in kinds and ("write", "write") in kinds
    # the real rule blocks both writers instead
    monkeypatch.undo()
    assert explore(parse("x := a.allocate\nx.share(b)\nprocess a { x.write }\nprocess b { x.read; x.write }")).ok


def test_broken_share_rule_shows_lemma_failures(monkeypatch):
    monkeypatch.setitem(semantics._PREMISES, semantics.Share, _share_without_cycle_check)
    report = explore(parse("process a { x := a.allocate; y := x.allocate; x.share(y) }"))
    assert report.lemma_failures
    assert any("(A)" in p for f in report.lemma_failures for p in f.problems)


def test_races_follows_the_definition():
    a, b = G.process(0), G.process(1)
    x = G.resource(0)
    g = G.OwnershipGraph([a, b, x], [(a, x)])
    c = semantics.Configuration({a: (Write(x),), b: (Read(x),)}, g)
    assert races(c) == []  # b is not a root of x, so its read is not reducible
    g.insert_edge(b, x)
    # now neither write is reducible: still no race
    assert races(semantics.Configuration({a: (Write(x),), b: (Write(x),)}, g)) == []


# -- canonical keys --------------------------------------------------------------------


def _successors(c):
    return sorted((pid, repr(s), nxt.key()) for pid, s, nxt in enabled_steps(c))


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_equal_keys_have_equal_successors(name):
    """Walk random schedules; whenever a key repeats, the states must behave alike."""
    rng = random.Random(name)
    start = load(PROGRAMS[name]).configuration()
    first = {}
    collisions = 0
    for _ in range(60):
        c = start
        while True:
            k = c.key()
            if k in first and first[k] is not c:
                collisions += 1
                assert _successors(first[k]) == _successors(c)
                assert first[k].graph == c.graph
            first.setdefault(k, c)
            steps = enabled_steps(c)
            if not steps:
                break
            c = rng.choice(steps)[2]
    assert collisions > 0


def test_spawned_bodies_are_kept():
    p = load(PROGRAMS["queue"])
    spawns = [s for s in p.statements() if isinstance(s, Spawn)]
    assert len(spawns) == 3
    assert all(isinstance(s, Pass) for s in spawns[0].body)
