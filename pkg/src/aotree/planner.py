"""Adaptive topology refinement: tighten bounds until one root action is certified."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AotError
from .exact import DEFAULT_BUDGET, BoundPair, ExactTree, identify_action, prune_dominated
from .pomdp import ParticleBelief, particle_propagate, particle_reweight
from .seeding import node_rng
from .sparse import SampleParams, SparseTree, alternative_paths, estimate_bounds
from .topology import RefinementSchedule, Topology, initial_topology, refine

log = logging.getLogger(__name__)

EXACT = "exact"
SAMPLED = "sampled"


def monotonic_ms():
    return time.perf_counter() * 1000.0


def frozen_clock():
    return 0.0


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = EXACT
    init_fraction: float = 0.15
    schedule: RefinementSchedule = field(default_factory=RefinementSchedule)
    params: SampleParams = field(default_factory=SampleParams)
    epsilon: float | None = None
    budget_nodes: int = DEFAULT_BUDGET
    topology: Topology | None = None
    seed: int = 0
    subtree_overrides: bool = True

    def __post_init__(self):
        if self.mode not in (EXACT, SAMPLED):
            raise ValueError(f"unknown planner mode {self.mode!r}")

    @property
    def separation(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return 1e-9 if self.mode == EXACT else 0.0

    def full(self) -> "PlannerConfig":
        """Same configuration with the all-original topology (the baseline planner)."""
        return replace(self, init_fraction=1.0, topology=None)

    def initial_topology(self) -> Topology:
        if self.topology is not None:
            return self.topology
        return initial_topology(min(self.init_fraction, 1.0), self.seed, self.subtree_overrides)


@dataclass
class IterationRecord:
    iteration: int
    bounds: dict
    pruned: frozenset
    identified: bool
    flipped_cum: int
    elapsed_ms: float
    gap: float
    alternatives: int
    nodes: int


@dataclass
class PlanResult:
    chosen_action: int | None
    identified: bool
    iterations: int
    trace: list
    total_elapsed_ms: float
    final_topology_label: str
    mode: str = EXACT

    def trace_rows(self):
        """Rows for the trace CSV, one per (iteration, action)."""
        for rec in self.trace:
            for a in sorted(rec.bounds):
                b = rec.bounds[a]
                yield {
                    "iteration": rec.iteration,
                    "action": a,
                    "lb": b.lb,
                    "ub": b.ub,
                    "pruned": int(a in rec.pruned),
                    "identified": int(rec.identified),
                    "flipped_cum": rec.flipped_cum,
                    "elapsed_ms": rec.elapsed_ms,
                }


def _gap(bounds, best):
    others = [b.ub for a, b in bounds.items() if a != best]
    return bounds[best].lb - max(others) if others else float("inf")


def root_particles(model, b0, n, seed) -> ParticleBelief:
    """Particle root belief: ``b0`` itself, or ``n`` draws from a discrete ``b0``."""
    if isinstance(b0, ParticleBelief):
        return b0
    rng = node_rng(seed, (), "root")
    if b0 is None:
        return ParticleBelief.uniform(model.sample_initial(n, rng))
    cdf = np.cumsum(b0)
    cdf[-1] = 1.0
    return ParticleBelief.uniform(np.searchsorted(cdf, rng.random(n), side="right"))


def plan(model, b0=None, config: PlannerConfig = PlannerConfig(), clock=monotonic_ms) -> PlanResult:
    """Refine the topology until the identification condition holds.

    Exact mode needs a tabular model; sampled mode works with any model
    exposing the generative interface. Errors raised mid-loop carry the
    partial result as ``exc.partial_result``.
    """
    start = clock()
    topology = config.initial_topology()
    schedule = config.schedule
    eps = config.separation
    if config.mode == EXACT:
        root = model.initial_belief if b0 is None else np.asarray(b0, dtype=float)
        evaluator = ExactTree(model, root, config.budget_nodes)
    else:
        root = root_particles(model, b0, config.params.particles, config.params.seed)
        evaluator = SparseTree(model, root, config.params)
    refine_rng = node_rng(schedule.seed, (), "refine")

    surviving = set(range(model.num_actions))
    latest = {}
    trace = []
    flipped_cum = 0

    def result(action, identified):
        return PlanResult(
            chosen_action=action,
            identified=identified,
            iterations=len(trace),
            trace=trace,
            total_elapsed_ms=clock() - start,
            final_topology_label=topology.label,
            mode=config.mode,
        )

    try:
        while True:
            t0 = clock()
            if config.mode == EXACT:
                tb = evaluator.evaluate(topology, surviving)
                ub, lb, alts, nodes = tb.ub, tb.lb, tb.alternatives, tb.nodes_expanded
            else:
                built = evaluator.nodes_built
                tree = evaluator.build(topology, surviving)
                ub, lb = estimate_bounds(tree)
                alts = alternative_paths(tree)
                nodes = evaluator.nodes_built - built
            for a in surviving:
                latest[a] = BoundPair(lb[a], ub[a])
            live = {a: latest[a] for a in surviving}
            surviving = prune_dominated(live, eps)
            live = {a: latest[a] for a in surviving}
            best = identify_action(live, eps)
            alts = frozenset(p for p in alts if p[0] in surviving)
            pruned = frozenset(latest) - surviving
            leader = best if best is not None else max(live, key=lambda a: (live[a].lb, -a))
            trace.append(
                IterationRecord(
                    iteration=len(trace) + 1,
                    bounds=dict(latest),
                    pruned=pruned,
                    identified=best is not None,
                    flipped_cum=flipped_cum,
                    elapsed_ms=clock() - t0,
                    gap=_gap(live, leader),
                    alternatives=len(alts),
                    nodes=nodes,
                )
            )
            log.debug("iteration %d: bounds=%s pruned=%s", len(trace), live, sorted(pruned))
            if best is not None:
                return result(best, True)
            if not alts or (schedule.max_iterations and len(trace) >= schedule.max_iterations):
                fallback = max(live, key=lambda a: (live[a].ub, -a))
                return result(fallback, False)
            topology, flipped = refine(topology, alts, schedule.flips_per_iteration, refine_rng)
            flipped_cum += len(flipped)
            evaluator.invalidate(flipped)
    except AotError as exc:
        exc.partial_result = result(None, False)
        raise


@dataclass
class StepRecord:
    step: int
    action: int
    reward: float
    planning_ms: float
    state: np.ndarray
    identified: bool
    iterations: int
    full_action: int | None = None
    full_planning_ms: float | None = None


@dataclass
class EpisodeRecord:
    steps: list
    compare_full: bool

    @property
    def total_planning_ms(self) -> float:
        return sum(s.planning_ms for s in self.steps)

    @property
    def total_full_planning_ms(self) -> float | None:
        if not self.compare_full:
            return None
        return sum(s.full_planning_ms for s in self.steps)

    @property
    def agreement(self) -> float | None:
        if not self.compare_full or not self.steps:
            return None
        return float(np.mean([s.action == s.full_action for s in self.steps]))


def replan_episode(
    env, steps: int, config: PlannerConfig, seed: int = 0, compare_full=False, clock=monotonic_ms
) -> EpisodeRecord:
    """Plan, act on a simulated true state, observe, update the particle belief; repeat.

    The recorded ``reward`` is ``r(x_t, a_t)`` at the state where the action was
    taken; ``state`` is the true state after the move.
    """
    n = config.params.particles
    truth_rng = node_rng(seed, (), "truth")
    true_state = env.sample_initial(1, truth_rng)
    belief = ParticleBelief.uniform(env.sample_initial(n, node_rng(seed, (), "belief")))
    records = []
    for t in range(steps):
        step_cfg = replace(
            config, seed=seed * 7919 + t, params=replace(config.params, seed=seed * 7919 + t)
        )
        step_cfg = replace(step_cfg, schedule=replace(config.schedule, seed=seed * 7919 + t))
        result = plan(env, belief, step_cfg, clock)
        full_action = full_ms = None
        if compare_full:
            full = plan(env, belief, step_cfg.full(), clock)
            full_action, full_ms = full.chosen_action, full.total_elapsed_ms
        a = result.chosen_action
        reward = float(env.reward(true_state, a)[0])
        step_rng = node_rng(seed, (t,), "world")
        true_state = env.sample_next(true_state, a, step_rng)
        z = env.sample_obs(true_state, step_rng)[0]
        belief = particle_reweight(
            particle_propagate(belief, a, env, n, node_rng(seed, (t,), "filter")), z, env
        )
        records.append(
            StepRecord(
                step=t,
                action=a,
                reward=reward,
                planning_ms=result.total_elapsed_ms,
                state=true_state[0].copy(),
                identified=result.identified,
                iterations=result.iterations,
                full_action=full_action,
                full_planning_ms=full_ms,
            )
        )
    return EpisodeRecord(records, compare_full)
