import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aotree.envs import RandomPomdpSpec, gen_random_pomdp
from aotree.errors import BudgetExceeded, MissingAssignment
from aotree.exact import (
    BoundPair,
    ExactTree,
    evaluate_bounds,
    greedy_policy,
    identify_action,
    lower_bound,
    prune_dominated,
    q_optimal_full,
    q_topology,
    qmdp_value,
    upper_bound,
)
from aotree.pomdp import TabularPomdp
from aotree.topology import (
    alternative_topology,
    explicit_topology,
    full_topology,
    initial_topology,
)
from conftest import small_instance
from oracles import brute_force_q, history_tree_q, literal_lower_bound, topology_policy_value


def test_single_layer_is_reward(two_state):
    m = TabularPomdp(two_state.transition, two_state.observation, two_state.reward_table, two_state.initial_belief, 1)
    for a in range(2):
        expected = m.initial_belief @ m.reward_table[:, a]
        assert q_optimal_full(m, a0=a) == pytest.approx(expected)
        assert upper_bound(m, alternative_topology(), a0=a) == pytest.approx(expected)


def test_identical_actions_tie():
    m = gen_random_pomdp(RandomPomdpSpec(3, 3, 2, seed=5, horizon=3, identical_actions=True))
    values = [q_optimal_full(m, a0=a) for a in range(3)]
    assert max(values) - min(values) < 1e-12
    tb = evaluate_bounds(m, initial_topology(0.4, 1))
    for a in range(3):
        assert tb.lb[a] == pytest.approx(tb.ub[a], abs=1e-12)
        assert tb.ub[a] == pytest.approx(values[0], abs=1e-12)


def test_matches_policy_enumeration():
    m = gen_random_pomdp(RandomPomdpSpec(3, 2, 2, seed=11, horizon=2))
    for a in range(2):
        assert q_optimal_full(m, a0=a) == pytest.approx(brute_force_q(m, m.initial_belief, a), abs=1e-12)


def test_oracles_agree():
    for seed in range(20):
        m = small_instance(seed, horizon=3, max_states=3, max_actions=2, max_obs=2)
        assert brute_force_q(m, m.initial_belief, 0) == pytest.approx(history_tree_q(m, m.initial_belief, 0), abs=1e-12)


def test_qmdp_point_mass():
    m = gen_random_pomdp(RandomPomdpSpec(4, 2, 3, seed=2, horizon=3))
    b = np.array([0.0, 1.0, 0.0, 0.0])
    v = [0.0] * 4
    for _ in range(2):
        v = [max(m.reward_table[x, a] + m.transition[a, x] @ np.array(v) for a in range(2)) for x in range(4)]
    assert qmdp_value(m, b, 1) == pytest.approx(m.reward_table[1, 1] + m.transition[1, 1] @ np.array(v))


def test_full_topology_collapses():
    m = small_instance(7, horizon=3)
    tb = evaluate_bounds(m, full_topology())
    for a in tb.ub:
        assert tb.ub[a] == pytest.approx(tb.lb[a], abs=1e-12)
        assert tb.ub[a] == pytest.approx(q_optimal_full(m, a0=a), abs=1e-12)


def test_topology_policy_against_trajectory_oracle():
    rng = np.random.default_rng(0)
    for seed in range(10):
        m = small_instance(seed, horizon=3, max_states=3, max_obs=3)
        t = initial_topology(0.5, seed)
        policy = {}
        pol = greedy_policy(m, t)
        for key in pol:
            policy[key] = int(rng.integers(m.num_actions))
        value = q_topology(m, t, policy)
        assert value == pytest.approx(topology_policy_value(m, t, policy, m.initial_belief, 0), abs=1e-10)


def test_greedy_policy_on_full_topology_is_optimal():
    m = small_instance(3, horizon=3)
    t = full_topology()
    assert q_topology(m, t, greedy_policy(m, t)) == pytest.approx(q_optimal_full(m), abs=1e-10)


def test_missing_assignment():
    m = small_instance(1, horizon=2)
    with pytest.raises(MissingAssignment):
        q_topology(m, full_topology(), {})


def test_budget():
    m = gen_random_pomdp(RandomPomdpSpec(4, 3, 4, seed=0, horizon=3))
    with pytest.raises(BudgetExceeded):
        evaluate_bounds(m, full_topology(), budget=10)


def _counterexample():
    # Phases A -> A' -> B with a hidden coin and uninformative observations; the
    # last layer rewards guessing the coin.
    T = np.zeros((2, 6, 6))
    for a in range(2):
        T[a, 0, 2] = T[a, 1, 3] = T[a, 2, 4] = T[a, 3, 5] = T[a, 4, 4] = T[a, 5, 5] = 1.0
    R = np.zeros((6, 2))
    R[4] = [1.0, -1.0]
    R[5] = [-1.0, 1.0]
    m = TabularPomdp(T, np.ones((6, 1)), R, np.array([0.5, 0.5, 0, 0, 0, 0]), 3)
    bits = {(0,): 0, (1,): 0}
    bits.update({(a, x, a1): 1 for a in range(2) for x in range(6) for a1 in range(2)})
    return m, explicit_topology(bits)


def test_literal_recursion_can_exceed_optimum():
    m, t = _counterexample()
    q_star = history_tree_q(m, m.initial_belief, 0)
    assert q_star == pytest.approx(0.0)
    assert literal_lower_bound(m, t, m.initial_belief, 0) == pytest.approx(1.0)
    assert lower_bound(m, t) == pytest.approx(-1.0)
    assert lower_bound(m, t) <= q_star <= upper_bound(m, t)


class TestIdentification:
    def test_disjoint(self):
        assert identify_action({0: BoundPair(5, 6), 1: BoundPair(1, 4)}) == 0

    def test_overlap(self):
        assert identify_action({0: BoundPair(3, 6), 1: BoundPair(4, 7)}) is None

    def test_touching(self):
        assert identify_action({0: BoundPair(5, 6), 1: BoundPair(1, 5)}, epsilon=1e-9) is None

    def test_pairwise_overlap_survives(self):
        b = {0: BoundPair(0, 3), 1: BoundPair(1, 4), 2: BoundPair(2, 5)}
        assert prune_dominated(b) == {0, 1, 2}

    def test_figure_pattern(self):
        b = {0: BoundPair(5, 8), 1: BoundPair(4, 6), 2: BoundPair(1, 3)}
        assert prune_dominated(b) == {0, 1}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3)), min_size=1, max_size=6))
def test_pruning_matches_pairwise_oracle(raw):
    bounds = {a: BoundPair(lo, lo + w) for a, (lo, w) in enumerate(raw)}
    eps = 1e-9
    expected = {a for a in bounds if not any(bounds[o].lb > bounds[a].ub + eps for o in bounds if o != a)}
    assert prune_dominated(bounds, eps) == expected


def test_cache_reuse_matches_fresh():
    m = gen_random_pomdp(RandomPomdpSpec(3, 2, 3, seed=4, horizon=3))
    tree = ExactTree(m, m.initial_belief)
    t = initial_topology(0.2, 0)
    first = tree.evaluate(t)
    deepest = max(first.alternatives, key=len)
    t2 = t.with_overrides([deepest])
    tree.invalidate([deepest])
    cached = tree.evaluate(t2)
    fresh = evaluate_bounds(m, t2)
    assert cached.nodes_reused > 0
    for a in fresh.ub:
        assert cached.ub[a] == fresh.ub[a] and cached.lb[a] == fresh.lb[a]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_values_within_horizon_range(seed, fraction):
    m = small_instance(seed)
    tb = evaluate_bounds(m, initial_topology(fraction, seed))
    limit = m.r_max * m.horizon + 1e-9
    for a in tb.ub:
        assert -limit <= tb.lb[a] <= tb.ub[a] + 1e-9 <= limit + 1e-9
