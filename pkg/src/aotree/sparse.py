"""Sparse-sampling estimates of the topology bounds with particle beliefs.

At a propagated node with bit 1, the parent's particles are propagated once
(``N`` particles) and ``C`` observation children are generated, each
reweighting those particles by one sampled observation. At a node with bit 0
a single child is created whose belief is one sampled next state.

All randomness is keyed by node path (see :mod:`aotree.seeding`), so two
topologies that agree on a subtree's bits produce the identical subtree. By
default the key ignores the action entries of the path, so sibling actions
are compared under common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingVmax, ValidationError
from .pomdp import ParticleBelief, TabularPomdp, particle_propagate, particle_reweight
from .seeding import node_rng
from .topology import NodePath, Topology, is_affected, related_paths


@dataclass(frozen=True)
class SampleParams:
    obs_samples: int = 50
    particles: int = 50
    depth: int | None = None
    seed: int = 0
    shared_streams: bool = True

    def __post_init__(self):
        if self.obs_samples < 1:
            raise ValidationError("obs_samples", "must be >= 1")
        if self.particles < 1:
            raise ValidationError("particles", "must be >= 1")
        if self.depth is not None and self.depth < 1:
            raise ValidationError("depth", "must be >= 1")


@dataclass
class SampledNode:
    path: NodePath
    belief: ParticleBelief
    rewards: np.ndarray
    children: dict = field(default_factory=dict)
    bits: dict = field(default_factory=dict)
    observation: object = None

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            for kids in node.children.values():
                stack.extend(kids)


def _stream_key(path, shared):
    """Key for a node's random stream.

    With ``shared`` the action entries are dropped, so sibling actions draw
    from the same streams (common random numbers across actions).
    """
    if not shared:
        return path
    return (len(path),) + tuple(path[1::2])


def _rewards(belief: ParticleBelief, model) -> np.ndarray:
    w = belief.normalized_weights()
    return np.array([w @ model.reward(belief.particles, a) for a in range(model.num_actions)])


@dataclass
class SparseTree:
    """Builds sampled topology trees for one root belief, reusing unaffected subtrees."""

    model: object
    b0: ParticleBelief
    params: SampleParams
    _cache: dict = field(default_factory=dict, repr=False)
    nodes_built: int = 0

    @property
    def horizon(self) -> int:
        return self.params.depth or self.model.horizon

    def invalidate(self, flipped) -> None:
        flipped_set, ancestors = related_paths(flipped)
        if not flipped_set:
            return
        for key in [k for k in self._cache if is_affected(k, flipped_set, ancestors)]:
            del self._cache[key]

    def build(self, topology: Topology, actions=None) -> SampledNode:
        self._topology = topology
        root = SampledNode((), self.b0, _rewards(self.b0, self.model))
        self.nodes_built += 1
        actions = range(self.model.num_actions) if actions is None else sorted(actions)
        if self.horizon > 1:
            for a in actions:
                self._expand(root, a, self.horizon)
        return root

    def _expand(self, node: SampledNode, a: int, remaining: int) -> None:
        model, params = self.model, self.params
        ppath = node.path + (a,)
        bit = self._topology.beta(ppath)
        kids = []
        if bit:
            propagated = None
            for j in range(params.obs_samples):
                cpath = ppath + (j,)
                child = self._cache.get(cpath)
                if child is None:
                    if propagated is None:
                        rng = node_rng(params.seed, _stream_key(ppath, params.shared_streams), "propagate")
                        propagated = particle_propagate(node.belief, a, model, params.particles, rng)
                    rng = node_rng(params.seed, _stream_key(cpath, params.shared_streams), "observe")
                    x = node.belief.sample_states(1, rng)
                    z = model.sample_obs(model.sample_next(x, a, rng), rng)[0]
                    child = self._node(cpath, particle_reweight(propagated, z, model), remaining - 1)
                    child.observation = z
                kids.append(child)
        else:
            cpath = ppath + (0,)
            child = self._cache.get(cpath)
            if child is None:
                rng = node_rng(params.seed, _stream_key(cpath, params.shared_streams), "reveal")
                x = node.belief.sample_states(1, rng)
                state = model.sample_next(x, a, rng)
                child = self._node(cpath, ParticleBelief(state, np.ones(1)), remaining - 1)
            kids.append(child)
        node.bits[a] = bit
        node.children[a] = kids

    def _node(self, path, belief, remaining) -> SampledNode:
        node = SampledNode(path, belief, _rewards(belief, self.model))
        self.nodes_built += 1
        if remaining > 1:
            for a in range(self.model.num_actions):
                self._expand(node, a, remaining - 1)
        self._cache[path] = node
        return node


def build_tree(model, topology, b0: ParticleBelief, params: SampleParams) -> SampledNode:
    return SparseTree(model, b0, params).build(topology)


def _backup(node: SampledNode, below_reveal: bool):
    q = node.rewards.copy()
    lb = node.rewards.copy()
    for a, kids in node.children.items():
        reveal = below_reveal or not node.bits[a]
        vals = [_backup(k, reveal) for k in kids]
        q[a] += np.mean([v[0].max() for v in vals])
        lb[a] += np.mean([(v[1].min() if reveal else v[1].max()) for v in vals])
    return q, lb


def estimate_bounds(tree: SampledNode) -> tuple[dict, dict]:
    """Root ``(ub_hat, lb_hat)`` per expanded action; leaves-only roots report rewards."""
    q, lb = _backup(tree, False)
    actions = sorted(tree.children) or range(len(tree.rewards))
    return {a: float(q[a]) for a in actions}, {a: float(lb[a]) for a in actions}


def estimate_ub(tree: SampledNode, model=None) -> dict:
    """Sampled optimal Q of the topology tree: reward plus mean over children of max."""
    return estimate_bounds(tree)[0]


def estimate_lb(tree: SampledNode, model=None, topology=None) -> dict:
    """Sampled lower bound; bits are read from the tree as built."""
    return estimate_bounds(tree)[1]


def alternative_paths(tree: SampledNode) -> frozenset:
    return frozenset(
        node.path + (a,) for node in tree.walk() for a, bit in node.bits.items() if not bit
    )


@dataclass(frozen=True)
class ConcentrationParams:
    obs_samples: int
    horizon: int
    num_actions: int
    lam: float
    v_max: float

    def __post_init__(self):
        for name in ("obs_samples", "horizon", "num_actions", "lam", "v_max"):
            if not getattr(self, name) > 0:
                raise ValidationError(name, "must be positive")


def concentration(params: ConcentrationParams, depth: int = 0) -> tuple[float, float]:
    """``(error_bound, probability)`` of the sampled-bound concentration result at ``depth``."""
    steps = params.horizon - depth
    if steps < 1:
        raise ValidationError("depth", "must be below the horizon")
    error = steps * (steps - 1) / 2 * params.lam
    a, c = params.num_actions, params.obs_samples
    log_fail = (
        math.log(2 * a)
        + steps * math.log(a * c)
        - c * params.lam**2 / (2 * params.v_max**2)
    )
    probability = 0.0 if log_fail >= 0 else 1.0 - math.exp(log_fail)
    return error, min(1.0, max(0.0, probability))


def v_max_for(model) -> float:
    if isinstance(model, TabularPomdp):
        return model.r_max * model.horizon
    v_max = getattr(model, "v_max", None)
    if v_max is None:
        raise MissingVmax(f"{type(model).__name__} needs a configured v_max")
    return float(v_max)
