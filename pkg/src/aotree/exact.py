"""Exact enumeration of observation-topology belief trees for tabular POMDPs.

Horizon convention: a node with remaining horizon ``m`` has
``Q = r(b, a)`` when ``m == 1`` and ``Q = r(b, a) + E[max_a' Q']`` otherwise,
so ``horizon`` counts action layers.

Upper bound: Bellman max recursion over the topology tree.

Lower bound: along paths that have only seen original observations, a child
with bit 1 contributes ``E_z max_a' lb`` and a child with bit 0 contributes
``E_x min_a' lb``. Once a path has passed a revealed-state node, every
combination below it is a min. Below a revealed state the policy knows at
least as much as any original-POMDP policy, so only the worst case there
is a valid lower bound. Applying max under a revealed node can exceed the
optimum when horizon >= 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, MissingAssignment
from .pomdp import TabularPomdp, ZERO_LIKELIHOOD
from .topology import (
    NodePath,
    Topology,
    full_topology,
    is_affected,
    related_paths,
)

DEFAULT_BUDGET = 2_000_000
REVEAL_MASS_TOL = 1e-15


@dataclass(frozen=True)
class BoundPair:
    lb: float
    ub: float

    @property
    def width(self) -> float:
        return self.ub - self.lb


@dataclass
class TreeBounds:
    """Per-action bounds of one tree evaluation plus what refinement needs."""

    ub: dict
    lb: dict
    alternatives: frozenset
    nodes_expanded: int
    nodes_reused: int = 0

    def bounds(self) -> dict:
        return {a: BoundPair(self.lb[a], self.ub[a]) for a in self.ub}


@dataclass
class _Future:
    ub: float
    lb: float
    alternatives: tuple
    size: int


@dataclass
class ExactTree:
    """Evaluates ub/lb of one root belief, reusing subtrees across refinements.

    The cache holds one entry per propagated node. Call :meth:`invalidate`
    with the flipped paths before evaluating a refined topology.
    """

    model: TabularPomdp
    b0: np.ndarray
    budget: int = DEFAULT_BUDGET
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.b0 = np.asarray(self.b0, dtype=float)

    def invalidate(self, flipped) -> None:
        flipped_set, ancestors = related_paths(flipped)
        if not flipped_set:
            return
        for key in [k for k in self._cache if is_affected(k, flipped_set, ancestors)]:
            del self._cache[key]

    def evaluate(self, topology: Topology, actions=None) -> TreeBounds:
        m = self.model
        actions = range(m.num_actions) if actions is None else sorted(actions)
        self._topology = topology
        self._expanded = 1
        self._reused = 0
        rewards = self.b0 @ m.reward_table
        ub, lb, alts = {}, {}, []
        for a in actions:
            if m.horizon == 1:
                ub[a] = lb[a] = float(rewards[a])
                continue
            fut = self._future((a,), self.b0 @ m.transition[a], m.horizon - 1, False)
            ub[a] = float(rewards[a] + fut.ub)
            lb[a] = float(rewards[a] + fut.lb)
            alts.extend(fut.alternatives)
        return TreeBounds(ub, lb, frozenset(alts), self._expanded, self._reused)

    def _future(self, ppath: NodePath, b_minus, remaining, revealed) -> _Future:
        cached = self._cache.get(ppath)
        if cached is not None:
            self._reused += cached.size
            return cached
        m = self.model
        bit = self._topology.beta(ppath)
        if bit:
            joint = b_minus[:, None] * m.observation
            eta = joint.sum(axis=0)
            branches = [(z, eta[z], joint[:, z] / eta[z]) for z in np.flatnonzero(eta > ZERO_LIKELIHOOD)]
        else:
            branches = []
            for x in np.flatnonzero(b_minus > REVEAL_MASS_TOL):
                post = np.zeros(m.num_states)
                post[x] = 1.0
                branches.append((x, b_minus[x], post))
        below_reveal = revealed or not bit
        ub = lb = 0.0
        alts = [] if bit else [ppath]
        size = 0
        for j, p, post in branches:
            cub, clb, calts, csize = self._posterior(ppath + (int(j),), post, remaining, below_reveal)
            ub += p * cub.max()
            lb += p * (clb.min() if below_reveal else clb.max())
            alts.extend(calts)
            size += csize
        fut = _Future(ub, lb, tuple(alts), size)
        self._cache[ppath] = fut
        return fut

    def _posterior(self, path, belief, remaining, revealed):
        self._expanded += 1
        if self._expanded > self.budget:
            raise BudgetExceeded(f"exact tree exceeds the node budget of {self.budget}")
        m = self.model
        rewards = belief @ m.reward_table
        if remaining == 1:
            return rewards, rewards, (), 1
        ub = rewards.copy()
        lb = rewards.copy()
        alts = []
        size = 1
        for a in range(m.num_actions):
            fut = self._future(path + (a,), belief @ m.transition[a], remaining - 1, revealed)
            ub[a] += fut.ub
            lb[a] += fut.lb
            alts.extend(fut.alternatives)
            size += fut.size
        return ub, lb, alts, size


def _root_belief(model, b0):
    return model.initial_belief if b0 is None else np.asarray(b0, dtype=float)


def evaluate_bounds(model, topology, b0=None, actions=None, budget=DEFAULT_BUDGET) -> TreeBounds:
    return ExactTree(model, _root_belief(model, b0), budget).evaluate(topology, actions)


def upper_bound(model, topology, b0=None, a0=0, budget=DEFAULT_BUDGET) -> float:
    """Maximum over the topology's policies of the topology-tree Q-value."""
    return evaluate_bounds(model, topology, b0, [a0], budget).ub[a0]


def lower_bound(model, topology, b0=None, a0=0, budget=DEFAULT_BUDGET) -> float:
    return evaluate_bounds(model, topology, b0, [a0], budget).lb[a0]


def q_optimal_full(model, b0=None, a0=0, budget=DEFAULT_BUDGET) -> float:
    """Optimal Q-value of the original POMDP at the root."""
    return upper_bound(model, full_topology(), b0, a0, budget)


def qmdp_value(model: TabularPomdp, b0=None, a0=0) -> float:
    """QMDP Q-value via finite-horizon value iteration on the underlying MDP."""
    b = _root_belief(model, b0)
    value = np.zeros(model.num_states)
    for _ in range(model.horizon - 1):
        q = model.reward_table + np.einsum("axy,y->xa", model.transition, value)
        value = q.max(axis=1)
    if model.horizon == 1:
        return float(b @ model.reward_table[:, a0])
    return float(b @ model.reward_table[:, a0] + (b @ model.transition[a0]) @ value)


def _branches(model, topology, ppath, b_minus):
    if topology.beta(ppath):
        joint = b_minus[:, None] * model.observation
        eta = joint.sum(axis=0)
        return [(int(z), eta[z], joint[:, z] / eta[z]) for z in np.flatnonzero(eta > ZERO_LIKELIHOOD)]
    out = []
    for x in np.flatnonzero(b_minus > REVEAL_MASS_TOL):
        post = np.zeros(model.num_states)
        post[x] = 1.0
        out.append((int(x), b_minus[x], post))
    return out


def q_topology(model, topology, policy, b0=None, a0=0) -> float:
    """Q-value of a fixed policy under the topology's augmented observation model.

    ``policy`` maps posterior node paths (depth 1 .. horizon-1) to actions.
    """

    def q(path, belief, a, remaining):
        value = float(belief @ model.reward_table[:, a])
        if remaining == 1:
            return value
        ppath = path + (a,)
        for j, p, post in _branches(model, topology, ppath, belief @ model.transition[a]):
            child = ppath + (j,)
            if child not in policy:
                raise MissingAssignment(f"no action assigned at node {child}")
            value += p * q(child, post, policy[child], remaining - 1)
        return value

    return q((), _root_belief(model, b0), a0, model.horizon)


def greedy_policy(model, topology, b0=None, a0=0) -> dict:
    """Policy taking the ub-maximizing action (lowest index on ties) at every node."""
    policy = {}

    def values(path, belief, remaining):
        q = belief @ model.reward_table
        if remaining == 1:
            return q
        q = q.copy()
        for a in range(model.num_actions):
            q[a] += visit(path + (a,), belief @ model.transition[a], remaining - 1)
        return q

    def visit(ppath, b_minus, remaining):
        total = 0.0
        for j, p, post in _branches(model, topology, ppath, b_minus):
            child_q = values(ppath + (j,), post, remaining)
            policy[ppath + (j,)] = int(np.argmax(child_q))
            total += p * child_q.max()
        return total

    b = _root_belief(model, b0)
    if model.horizon > 1:
        visit((a0,), b @ model.transition[a0], model.horizon - 1)
    return policy


def _as_bound_map(bounds) -> dict:
    if isinstance(bounds, dict):
        return bounds
    return dict(enumerate(bounds))


def identify_action(bounds, epsilon=1e-9):
    """Return the action whose lb strictly exceeds every other ub, else None."""
    bounds = _as_bound_map(bounds)
    if not bounds:
        return None
    best = max(bounds, key=lambda a: (bounds[a].lb, -a))
    lb = bounds[best].lb
    if all(lb > bounds[a].ub + epsilon for a in bounds if a != best):
        return best
    return None


def prune_dominated(bounds, epsilon=1e-9) -> set:
    """Actions not dominated by another action's lower bound."""
    bounds = _as_bound_map(bounds)
    top_lb = max(b.lb for b in bounds.values())
    return {a for a, b in bounds.items() if not top_lb > b.ub + epsilon}
