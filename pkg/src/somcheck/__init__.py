"""Shared ownership checking: ownership graphs, a dynamic checker,
synchronization adapters, trace replay and an interleaving explorer."""

from __future__ import annotations

from .checker import (
    MODE_ENV,
    OK,
    Actor,
    CheckerError,
    Mode,
    MultiOwnerError,
    OwnershipViolation,
    Session,
    Violation,
    new_session,
)
from .graph import (
    Edge,
    EntityId,
    Kind,
    OwnershipGraph,
    find_roots,
    is_acyclic,
    is_ownership_graph,
    problems,
    render,
    root_of,
    validate,
)
from .semantics import (
    Allocate,
    Configuration,
    Pass,
    Read,
    Release,
    Share,
    Spawn,
    Verdict,
    ViolationKind,
    Write,
    apply,
    enabled_steps,
    premise,
)

__version__ = "0.1.0"

__all__ = [
    "MODE_ENV", "OK", "Actor", "CheckerError", "Mode", "MultiOwnerError", "OwnershipViolation",
    "Session", "Violation", "new_session",
    "Edge", "EntityId", "Kind", "OwnershipGraph", "find_roots", "is_acyclic", "is_ownership_graph",
    "problems", "render", "root_of", "validate",
    "Allocate", "Configuration", "Pass", "Read", "Release", "Share", "Spawn", "Verdict",
    "ViolationKind", "Write", "apply", "enabled_steps", "premise",
]
