"""Exhaustive interleaving exploration of small SOM programs.

Programs are written in a small textual language::

    # top level: the initial graph and the initial processes
    resource list                  # a resource (it still needs an owner)
    list.share(main)               # an edge main -> list
    buf := main.allocate           # a resource with an edge main -> buf

    process main {
        x := main.allocate
        w := spawn { x.read; x.write }
        x.pass(main, w)
        repeat 2 { x.read }
    }

Statements block when their premise does not hold, so synchronization is
expressed by ordering passes.  Every visited state is checked for data races
(a reducible write next to another process's reducible read or write on the
same resource) and every transition for preservation of the graph
properties.  States where something is left to run but nothing can move are
reported as deadlocks.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from . import graph as G
from .graph import EntityId, Kind, OwnershipGraph
from .semantics import (
    Allocate,
    Configuration,
    Pass,
    Read,
    Release,
    Share,
    Spawn,
    Verdict,
    Write,
    enabled_steps,
    premise,
    render_statement,
)

SUFFIX = ".som"
DEFAULT_REPEAT_BOUND = 3
DEFAULT_MAX_STATES = 10**6
KEYWORDS = {"process", "resource", "repeat", "spawn"}


class ExplorerError(Exception):
    pass


class ParseError(ExplorerError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.reason = message


class UndeclaredName(ParseError):
    def __init__(self, name: str, line: int, col: int):
        super().__init__(f"undeclared name {name!r}", line, col)
        self.name = name


class InvalidInitialGraph(ExplorerError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid initial graph: " + "; ".join(problems))
        self.problems = problems


class LimitExceeded(ExplorerError):
    def __init__(self, report: ExplorationReport):
        super().__init__(f"more than {report.max_states} states")
        self.report = report


# -- lexing and parsing ------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|[{}(),.;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


@dataclass(frozen=True)
class Node:
    """Unresolved statement.  ``names`` holds the operands in source order."""

    op: str
    names: tuple
    line: int
    col: int
    body: tuple = ()
    count: int = 0


_ARITY = {"read": 0, "write": 0, "pass": 2, "share": 1, "release": 1}


class _Parser:
    def __init__(self, text: str, repeat_bound: int):
        self.toks = tokenize(text)
        self.i = 0
        self.repeat_bound = repeat_bound

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg: str, t: Token | None = None):
        t = t or self.peek()
        raise ParseError(msg, t.line, t.col)

    def accept(self, text: str) -> bool:
        t = self.peek()
        if t.kind in ("op", "name") and t.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text or t.kind not in ("op", "name"):
            self.fail(f"expected {text!r}, found {t.text or 'end of input'!r}")
        return self.advance()

    def name(self) -> Token:
        t = self.peek()
        if t.kind != "name":
            self.fail(f"expected a name, found {t.text or 'end of input'!r}")
        if t.text in KEYWORDS:
            self.fail(f"{t.text!r} is a reserved word")
        return self.advance()

    def items(self) -> list:
        out = []
        while self.peek().kind != "eof":
            t = self.peek()
            if t.kind == "name" and t.text == "process":
                self.advance()
                n = self.name()
                out.append(Node("process", (n.text,), n.line, n.col, self.block()))
            elif t.kind == "name" and t.text == "resource":
                self.advance()
                while True:
                    n = self.name()
                    out.append(Node("resource", (n.text,), n.line, n.col))
                    if not self.accept(","):
                        break
            else:
                s = self.statement()
                if s.op not in ("allocate", "share"):
                    self.fail("only process blocks, resource, allocate and share declarations may appear at top level",
                              Token("name", "", s.line, s.col))
                out.append(s)
            self.accept(";")
        return out

    def block(self) -> tuple:
        self.expect("{")
        body = []
        while not self.accept("}"):
            if self.peek().kind == "eof":
                self.fail("unterminated block, expected '}'")
            body.append(self.statement())
            self.accept(";")
        return tuple(body)

    def statement(self) -> Node:
        t = self.peek()
        if t.kind == "name" and t.text == "repeat":
            self.advance()
            k = self.peek()
            if k.kind != "int":
                self.fail("repeat needs an iteration count")
            self.advance()
            count = int(k.text)
            if count > self.repeat_bound:
                self.fail(f"repeat count {count} exceeds the bound {self.repeat_bound}", k)
            return Node("repeat", (), t.line, t.col, self.block(), count)
        target = self.name()
        if self.accept(":="):
            if self.accept("spawn"):
                if self.accept("("):
                    self.expect(")")
                return Node("spawn", (target.text,), target.line, target.col, self.block())
            owner = self.name()
            self.expect(".")
            m = self.peek()
            if m.text != "allocate":
                self.fail(f"expected 'spawn' or '<owner>.allocate' after ':=', found {m.text!r}", m)
            self.advance()
            return Node("allocate", (target.text, owner.text), target.line, target.col)
        self.expect(".")
        m = self.peek()
        if m.kind != "name" or m.text not in _ARITY:
            self.fail(f"unknown operation {m.text!r}", m)
        self.advance()
        args = []
        if self.accept("("):
            if not self.accept(")"):
                args.append(self.name().text)
                while self.accept(","):
                    args.append(self.name().text)
                self.expect(")")
        want = _ARITY[m.text]
        if len(args) != want:
            self.fail(f"{m.text} takes {want} argument{'s' if want != 1 else ''}, got {len(args)}", m)
        return Node(m.text, (target.text, *args), target.line, target.col)


def parse_nodes(text: str, repeat_bound: int = DEFAULT_REPEAT_BOUND) -> list:
    return _Parser(text, repeat_bound).items()


# -- resolution --------------------------------------------------------------


@dataclass
class SomProgram:
    names: dict  # EntityId -> str
    initial: OwnershipGraph
    processes: dict  # EntityId -> tuple of statements
    source: str = ""

    def name_of(self, e: EntityId) -> str:
        return self.names.get(e, str(e))

    def configuration(self) -> Configuration:
        return Configuration(self.processes, self.initial.copy())

    def statements(self) -> Iterator:
        def walk(prog):
            for s in prog:
                yield s
                if isinstance(s, Spawn):
                    yield from walk(s.body)

        for prog in self.processes.values():
            yield from walk(prog)

    def statement_kinds(self) -> set:
        return {type(s).__name__.lower() for s in self.statements()}


def _bindings(body) -> Iterator[Node]:
    """Binding sites of ``body``, through spawn bodies but not nested repeats."""
    for n in body:
        if n.op in ("spawn", "allocate"):
            yield n
        if n.op == "spawn":
            yield from _bindings(n.body)


class _Resolver:
    def __init__(self):
        self.names: dict[EntityId, str] = {}
        self.next = {Kind.PROCESS: 0, Kind.RESOURCE: 0}

    def new(self, kind: Kind, name: str) -> EntityId:
        e = EntityId(kind, self.next[kind])
        self.next[kind] += 1
        self.names[e] = name
        return e

    def declare(self, scope: dict, node: Node, name: str, kind: Kind, suffix: str = "") -> None:
        if name in scope:
            raise ParseError(f"{name!r} is declared more than once", node.line, node.col)
        scope[name] = self.new(kind, name + suffix)

    @staticmethod
    def lookup(env: list, name: str, node: Node) -> EntityId:
        for scope in reversed(env):
            if name in scope:
                return scope[name]
        raise UndeclaredName(name, node.line, node.col)

    def statements(self, body, env: list) -> list:
        out = []
        for n in body:
            if n.op == "repeat":
                for i in range(n.count):
                    local: dict = {}
                    for b in _bindings(n.body):
                        self.declare(local, b, b.names[0], Kind.PROCESS if b.op == "spawn" else Kind.RESOURCE,
                                     f"_{i}")
                    out.extend(self.statements(n.body, env + [local]))
                continue
            e = [self.lookup(env, x, n) for x in n.names]
            try:
                if n.op == "read":
                    out.append(Read(e[0]))
                elif n.op == "write":
                    out.append(Write(e[0]))
                elif n.op == "pass":
                    out.append(Pass(e[0], e[1], e[2]))
                elif n.op == "share":
                    out.append(Share(e[0], e[1]))
                elif n.op == "release":
                    out.append(Release(e[0], e[1]))
                elif n.op == "allocate":
                    out.append(Allocate(e[0], e[1]))
                elif n.op == "spawn":
                    out.append(Spawn(e[0], self.statements(n.body, env)))
                else:
                    raise ParseError(f"unexpected {n.op}", n.line, n.col)
            except TypeError as exc:
                raise ParseError(str(exc), n.line, n.col) from None
        return out


def parse(text: str, *, repeat_bound: int = DEFAULT_REPEAT_BOUND) -> SomProgram:
    """Parse, unroll and resolve a program; validate its initial graph."""
    items = parse_nodes(text, repeat_bound)
    r = _Resolver()
    glob: dict[str, EntityId] = {}
    # pass 1: every name outside repeat bodies is global, so order does not matter
    for n in items:
        if n.op == "process":
            r.declare(glob, n, n.names[0], Kind.PROCESS)
        elif n.op in ("resource", "allocate"):
            r.declare(glob, n, n.names[0], Kind.RESOURCE)
    for n in items:
        if n.op == "process":
            for b in _bindings(n.body):
                r.declare(glob, b, b.names[0], Kind.PROCESS if b.op == "spawn" else Kind.RESOURCE)
    # pass 2
    env = [glob]
    initial = OwnershipGraph()
    processes = {}
    for n in items:
        if n.op in ("process", "resource"):
            initial.insert_entity(glob[n.names[0]])
        elif n.op == "allocate":
            owner = r.lookup(env, n.names[1], n)
            initial.insert_entity(glob[n.names[0]])
            initial.insert_edge(owner, glob[n.names[0]])
        elif n.op == "share":
            res, owner = (r.lookup(env, x, n) for x in n.names)
            if not res.is_resource:
                raise ParseError(f"{n.names[0]!r} is not a resource", n.line, n.col)
            initial.insert_edge(owner, res)
    for n in items:
        if n.op == "process":
            processes[glob[n.names[0]]] = tuple(r.statements(n.body, env))
    found = G.problems(initial, r.names)
    if found:
        raise InvalidInitialGraph(found)
    return SomProgram(r.names, initial, processes, text)


def load(path: str | Path, *, repeat_bound: int = DEFAULT_REPEAT_BOUND) -> SomProgram:
    return parse(Path(path).read_text(encoding="utf-8"), repeat_bound=repeat_bound)


# -- exploration -------------------------------------------------------------


@dataclass(frozen=True)
class RaceWitness:
    state: Configuration
    p1: EntityId
    p2: EntityId
    resource: EntityId
    kinds: tuple  # ("write", "write" | "read")


@dataclass(frozen=True)
class LemmaFailure:
    state: Configuration
    actor: EntityId
    statement: object
    problems: tuple


@dataclass
class ExplorationReport:
    program: SomProgram
    states: int = 0
    transitions: int = 0
    witnesses: list = field(default_factory=list)
    lemma_failures: list = field(default_factory=list)
    deadlocks: list = field(default_factory=list)
    complete: bool = True
    max_states: int = DEFAULT_MAX_STATES

    @property
    def ok(self) -> bool:
        return not self.witnesses and not self.lemma_failures

    def _graph_lines(self, c: Configuration) -> list:
        return G.render(c.graph, self.program.names).splitlines()

    def _blocked(self, c: Configuration) -> dict:
        name = self.program.name_of
        return {
            name(pid): render_statement(prog[0], name)
            for pid, prog in sorted(c.processes.items())
            if prog
        }

    def to_json(self) -> dict:
        name = self.program.name_of
        return {
            "states": self.states,
            "witnesses": [
                {
                    "p1": name(w.p1),
                    "p2": name(w.p2),
                    "resource": name(w.resource),
                    "kinds": list(w.kinds),
                    "graph": self._graph_lines(w.state),
                }
                for w in self.witnesses
            ],
            "lemma_failures": [
                {
                    "actor": name(f.actor),
                    "statement": render_statement(f.statement, name),
                    "problems": list(f.problems),
                    "graph": self._graph_lines(f.state),
                }
                for f in self.lemma_failures
            ],
            "deadlocks": [{"blocked": self._blocked(c), "graph": self._graph_lines(c)} for c in self.deadlocks],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n"

    def render(self) -> str:
        name = self.program.name_of
        lines = [
            f"states: {self.states}{'' if self.complete else ' (limit reached, partial)'}",
            f"transitions: {self.transitions}",
            f"race witnesses: {len(self.witnesses)}",
        ]
        for w in self.witnesses:
            lines.append(f"  {name(w.p1)} {w.kinds[0]} / {name(w.p2)} {w.kinds[1]} on {name(w.resource)}")
        lines.append(f"lemma failures: {len(self.lemma_failures)}")
        for f in self.lemma_failures:
            lines.append(f"  {name(f.actor)}: {render_statement(f.statement, name)}: {'; '.join(f.problems)}")
        lines.append(f"deadlocks: {len(self.deadlocks)}")
        for i, c in enumerate(self.deadlocks, 1):
            blocked = ", ".join(f"{p} at {s}" for p, s in self._blocked(c).items())
            lines.append(f"  #{i} blocked: {blocked}")
            lines.extend("      " + ln for ln in self._graph_lines(c))
        return "\n".join(lines) + "\n"


def races(c: Configuration) -> list:
    """Every data race of ``c``: heads that are reducible at the same time."""
    g = c.graph
    heads = []
    for pid, prog in sorted(c.processes.items()):
        if prog and isinstance(prog[0], (Read, Write)) and premise(g, pid, prog[0]) is Verdict.ENABLED:
            heads.append((pid, prog[0]))
    out = []
    for p1, s1 in heads:
        if not isinstance(s1, Write):
            continue
        for p2, s2 in heads:
            if p2 != p1 and s2.resource == s1.resource:
                kind = "write" if isinstance(s2, Write) else "read"
                out.append(RaceWitness(c, p1, p2, s1.resource, ("write", kind)))
    return out


def explore(program: SomProgram, *, max_states: int = DEFAULT_MAX_STATES,
            relaxed_release: bool = False) -> ExplorationReport:
    """Depth-first search over all interleavings, merging equal states.

    Raises :class:`LimitExceeded` carrying the partial report when more than
    ``max_states`` distinct states are reachable.
    """
    report = ExplorationReport(program, max_states=max_states)
    start = program.configuration()
    seen = {start.key()}
    stack = [start]
    while stack:
        c = stack.pop()
        report.states += 1
        report.witnesses.extend(races(c))
        steps = enabled_steps(c, relaxed_release=relaxed_release)
        if not steps and not c.is_terminal():
            report.deadlocks.append(c)
        # reversed so the lowest process id is explored first
        for pid, s, nxt in reversed(steps):
            report.transitions += 1
            if not G.is_ownership_graph(nxt.graph):
                found = G.problems(nxt.graph, program.names)
                report.lemma_failures.append(LemmaFailure(c, pid, s, tuple(found)))
            k = nxt.key()
            if k in seen:
                continue
            if len(seen) >= max_states:
                report.complete = False
                raise LimitExceeded(report)
            seen.add(k)
            stack.append(nxt)
    return report


def check_deadlock(report: ExplorationReport) -> list:
    """States with pending statements and no enabled step."""
    return list(report.deadlocks)


# -- bundled programs --------------------------------------------------------

PROGRAMS_DIR = Path(__file__).with_name("programs")


def bundled_programs() -> dict:
    """Name -> path of the example programs shipped with the package."""
    return {p.stem: p for p in sorted(PROGRAMS_DIR.glob("*" + SUFFIX))}
