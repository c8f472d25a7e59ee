import math

import numpy as np
import pytest

from aotree.envs import (
    BeaconWorld,
    RandomPomdpSpec,
    beacon_obs_loglik,
    beacon_reward,
    beacon_step,
    default_world,
    gen_random_pomdp,
    random_world,
)
from aotree.errors import ValidationError


def _world(**kw):
    base = dict(beacon=[0.0, 0.0], goal=[10.0, 0.0], obstacles=[[0.0, 20.0], [30.0, 30.0], [-40.0, 0.0]])
    base.update(kw)
    return BeaconWorld(**base)


class TestRandomPomdp:
    def test_experiment_one_dimensions(self):
        m = gen_random_pomdp(RandomPomdpSpec(3, 2, 20, seed=0))
        assert (m.num_states, m.num_actions, m.num_observations) == (3, 2, 20)

    def test_experiment_two_dimensions(self):
        m = gen_random_pomdp(RandomPomdpSpec(1000, 2, 2000, seed=0, horizon=3))
        assert m.transition.shape == (2, 1000, 1000)
        assert m.observation.shape == (1000, 2000)

    def test_deterministic(self):
        a = gen_random_pomdp(RandomPomdpSpec(4, 3, 5, seed=7)).dumps()
        b = gen_random_pomdp(RandomPomdpSpec(4, 3, 5, seed=7)).dumps()
        assert a == b

    def test_rewards_in_range(self):
        m = gen_random_pomdp(RandomPomdpSpec(6, 3, 2, seed=1, reward_range=(-3.0, 2.0)))
        assert m.reward_table.min() >= -3.0 and m.reward_table.max() <= 2.0

    def test_zero_actions(self):
        with pytest.raises(ValidationError) as err:
            RandomPomdpSpec(3, 0, 2)
        assert err.value.field == "num_actions"

    def test_bad_range(self):
        with pytest.raises(ValidationError):
            RandomPomdpSpec(3, 2, 2, reward_range=(1.0, 0.0))


class TestBeaconObservation:
    def test_boundary_uses_near_variance(self):
        w = _world()
        assert w.obs_variance(np.array([1.0, 0.0]))[0] == pytest.approx(0.01)

    def test_mode_density(self):
        w = _world()
        x = np.array([0.6, 0.8])
        assert beacon_obs_loglik(x - w.beacon, x, w) == pytest.approx(-math.log(2 * math.pi * 0.01))

    def test_doubling_distance_halves_variance(self):
        w = _world()
        v2 = w.obs_variance(np.array([2.0, 0.0]))[0]
        v4 = w.obs_variance(np.array([4.0, 0.0]))[0]
        assert v4 == pytest.approx(v2 / 2)


class TestBeaconReward:
    def test_at_goal(self):
        w = _world()
        assert beacon_reward(w.goal, 0, w) == pytest.approx(50_000)

    def test_on_obstacle_boundary(self):
        w = _world(goal=[0.0, 30.999], obstacles=[[0.0, 20.0], [30.0, 30.0], [-40.0, 0.0]])
        x = np.array([0.0, 21.0])
        assert beacon_reward(x, 0, w) == pytest.approx(-45.0)

    def test_far_away(self):
        w = _world()
        x = np.array([10.0, -49.999])
        assert beacon_reward(x, 0, w) == pytest.approx(1.0)

    def test_penalty_applied_once(self):
        w = _world(obstacles=[[0.0, 20.0], [0.5, 20.0], [-40.0, 0.0]])
        x = np.array([0.2, 20.0])
        goal_part = 50 / (np.linalg.norm(x - w.goal) + 0.001)
        assert beacon_reward(x, 0, w) == pytest.approx(goal_part - 50)

    def test_independent_of_action(self):
        w = default_world()
        x = np.array([1.3, 0.4])
        assert len({beacon_reward(x, a, w) for a in range(4)}) == 1


class TestBeaconMotion:
    def test_noiseless(self):
        w = _world(motion_var=0.0)
        x = np.array([1.0, 2.0])
        np.testing.assert_array_equal(beacon_step(x, 1, np.random.default_rng(0), w), [1.0, 3.0])

    def test_moments(self):
        w = _world()
        x = np.tile([2.0, -1.0], (100_000, 1))
        nxt = w.sample_next(x, 0, np.random.default_rng(1))
        np.testing.assert_allclose(nxt.mean(axis=0), [3.0, -1.0], atol=0.01)
        np.testing.assert_allclose(nxt.var(axis=0), [0.01, 0.01], atol=0.001)

    def test_reproducible(self):
        w = default_world()
        x = np.array([0.0, 0.0])
        a = beacon_step(x, 2, np.random.default_rng(5), w)
        b = beacon_step(x, 2, np.random.default_rng(5), w)
        np.testing.assert_array_equal(a, b)


def test_default_world_layout():
    w = default_world(3)
    assert w.obstacles.shape == (3, 2)
    assert w.v_max == pytest.approx(150_000)
    assert np.linalg.norm(w.goal - w.start_mean) > 3


def test_world_round_trip(tmp_path):
    w = default_world()
    import json

    (tmp_path / "w.json").write_text(json.dumps(w.to_dict()))
    again = BeaconWorld.load(tmp_path / "w.json")
    np.testing.assert_array_equal(again.obstacles, w.obstacles)
    assert again.v_max == w.v_max


def test_world_needs_three_obstacles():
    doc = default_world().to_dict()
    doc["obstacles"] = doc["obstacles"][:2]
    with pytest.raises(ValidationError):
        BeaconWorld.from_dict(doc)


def test_random_world_is_seeded():
    a, b = random_world(4), random_world(4)
    np.testing.assert_array_equal(a.goal, b.goal)
    np.testing.assert_array_equal(a.obstacles, b.obstacles)
