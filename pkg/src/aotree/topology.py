"""Observation topologies: which propagated nodes keep the original observations.

Tree positions are addressed by a ``NodePath``: a flat tuple of ints that
alternates action and branch indices, starting with the root action. A
posterior node has an even-length path, ``(a0, j1, a1, j2, ...)``, and the
propagated node reached by taking action ``a`` from posterior ``p`` is
``p + (a,)``. The branch index means observation index, revealed state
index or sample index, depending on the regime and the solver.

A topology assigns each propagated node a bit: 1 keeps the original
observation space, 0 switches to the fully observable alternative. By
default a node forced to 1 by refinement takes its whole subtree with it,
which keeps both bounds monotone across refinements. With
``subtree_overrides=False`` only the node itself is forced and its new
descendants keep their hashed bits; refinement is then cheaper but the
bounds may move non-monotonically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import NothingToFlip, ValidationError
from .seeding import unit_hash

NodePath = tuple

EXPLICIT = "explicit"
SEEDED = "seeded"


def path_depth(path: NodePath) -> int:
    """Number of action layers taken along ``path``."""
    return (len(path) + 1) // 2


def is_propagated(path: NodePath) -> bool:
    return len(path) % 2 == 1


def is_prefix(p: NodePath, q: NodePath) -> bool:
    return len(p) <= len(q) and q[: len(p)] == p


@dataclass(frozen=True)
class Topology:
    mode: str = SEEDED
    seed: int = 0
    fraction: float = 0.0
    bits: Mapping[NodePath, int] = field(default_factory=dict)
    overrides: frozenset = frozenset()
    label: str = "custom"
    subtree_overrides: bool = True

    def __post_init__(self):
        if self.mode not in (EXPLICIT, SEEDED):
            raise ValidationError("mode", f"unknown topology mode {self.mode!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValidationError("fraction", "must lie in [0, 1]")
        object.__setattr__(self, "overrides", frozenset(tuple(p) for p in self.overrides))

    def beta(self, path: NodePath) -> int:
        if not is_propagated(path):
            raise ValueError(f"beta is defined on propagated nodes, got path {path}")
        if path in self.overrides:
            return 1
        if self.overrides and self.subtree_overrides:
            for end in range(1, len(path), 2):
                if path[:end] in self.overrides:
                    return 1
        if self.mode == EXPLICIT:
            return int(self.bits.get(path, 0))
        if self.fraction >= 1.0:
            return 1
        if self.fraction <= 0.0:
            return 0
        return int(unit_hash(self.seed, path) < self.fraction)

    def with_overrides(self, extra: Iterable[NodePath], label: str | None = None) -> "Topology":
        return Topology(
            mode=self.mode,
            seed=self.seed,
            fraction=self.fraction,
            bits=self.bits,
            overrides=self.overrides | frozenset(tuple(p) for p in extra),
            label=label or self.label,
            subtree_overrides=self.subtree_overrides,
        )

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode,
            "seed": self.seed,
            "fraction": self.fraction,
            "overrides": sorted(list(p) for p in self.overrides),
            "label": self.label,
            "subtree_overrides": self.subtree_overrides,
        }
        if self.mode == EXPLICIT:
            doc["bits"] = sorted([list(p), int(b)] for p, b in self.bits.items())
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Topology":
        try:
            bits = {tuple(int(i) for i in p): int(b) for p, b in doc.get("bits", [])}
            return cls(
                mode=doc.get("mode", SEEDED),
                seed=int(doc.get("seed", 0)),
                fraction=float(doc.get("fraction", 0.0)),
                bits=bits,
                overrides=frozenset(tuple(int(i) for i in p) for p in doc.get("overrides", [])),
                label=doc.get("label", "custom"),
                subtree_overrides=bool(doc.get("subtree_overrides", True)),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError("topology", str(exc)) from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Topology":
        return cls.from_dict(json.loads(Path(path).read_text()))


def full_topology() -> Topology:
    """tau_Z: the original POMDP, original observations everywhere."""
    return Topology(mode=SEEDED, fraction=1.0, label="tau_Z")


def alternative_topology() -> Topology:
    """tau_O: full observability everywhere (the QMDP tree)."""
    return Topology(mode=SEEDED, fraction=0.0, label="tau_O")


def explicit_topology(bits: Mapping[NodePath, int], label="custom") -> Topology:
    return Topology(mode=EXPLICIT, bits=dict(bits), label=label)


def initial_topology(fraction: float, seed: int, subtree_overrides: bool = True) -> Topology:
    """Seeded topology keeping the original observations at ``fraction`` of nodes."""
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError("fraction", "must lie in [0, 1]")
    return Topology(
        mode=SEEDED,
        seed=seed,
        fraction=fraction,
        label=f"seeded({fraction:g})",
        subtree_overrides=subtree_overrides,
    )


@dataclass(frozen=True)
class RefinementSchedule:
    flips_per_iteration: int = 5
    max_iterations: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.flips_per_iteration < 1:
            raise ValidationError("flips_per_iteration", "must be >= 1")


def refine(topology: Topology, tree_summary: Iterable[NodePath], n: int, rng: np.random.Generator):
    """Switch ``min(n, |tree_summary|)`` random alternative nodes back to original.

    Returns ``(new_topology, flipped)``.
    """
    candidates = sorted(set(tuple(p) for p in tree_summary))
    if not candidates:
        raise NothingToFlip("no alternative-regime node is reachable")
    k = min(n, len(candidates))
    picked = rng.choice(len(candidates), size=k, replace=False)
    flipped = frozenset(candidates[i] for i in sorted(picked))
    label = topology.label if topology.label.startswith("refined") else f"refined:{topology.label}"
    return topology.with_overrides(flipped, label=label), flipped


def related_paths(flipped: Iterable[NodePath]):
    """Return ``(flipped_set, ancestor_set)`` for fast prefix-relation checks."""
    flipped = set(tuple(p) for p in flipped)
    ancestors = set()
    for p in flipped:
        for end in range(len(p)):
            ancestors.add(p[:end])
    return flipped, ancestors


def is_affected(path: NodePath, flipped: set, ancestors: set) -> bool:
    """True when ``path`` is a flipped node, or an ancestor or descendant of one."""
    if path in ancestors or path in flipped:
        return True
    return any(path[:end] in flipped for end in range(1, len(path), 2))


def reusable_nodes(flipped: Iterable[NodePath], all_nodes: Iterable[NodePath]) -> set:
    """Nodes with no flipped ancestor or descendant; their cached values stay valid."""
    flipped_set, ancestors = related_paths(flipped)
    if not flipped_set:
        return set(tuple(p) for p in all_nodes)
    return {
        tuple(p) for p in all_nodes if not is_affected(tuple(p), flipped_set, ancestors)
    }
