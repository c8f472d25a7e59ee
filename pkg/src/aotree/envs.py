"""Benchmark problems: seeded random tabular POMDPs and beacon navigation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .pomdp import TabularPomdp


@dataclass(frozen=True)
class RandomPomdpSpec:
    num_states: int
    num_actions: int
    num_observations: int
    seed: int = 0
    reward_range: tuple = (0.0, 1.0)
    horizon: int = 2
    identical_actions: bool = False

    def __post_init__(self):
        for name in ("num_states", "num_actions", "num_observations", "horizon"):
            if getattr(self, name) < 1:
                raise ValidationError(name, "must be a positive integer")
        lo, hi = self.reward_range
        if lo > hi:
            raise ValidationError("reward_range", "lo must not exceed hi")


def _stochastic_rows(rng, shape):
    rows = rng.exponential(size=shape)
    return rows / rows.sum(axis=-1, keepdims=True)


def gen_random_pomdp(spec: RandomPomdpSpec) -> TabularPomdp:
    """Flat-Dirichlet transition and observation rows, uniform rewards, uniform b0."""
    rng = np.random.default_rng(spec.seed)
    x, a, z = spec.num_states, spec.num_actions, spec.num_observations
    transition = _stochastic_rows(rng, (a, x, x))
    observation = _stochastic_rows(rng, (x, z))
    lo, hi = spec.reward_range
    reward = rng.uniform(lo, hi, size=(x, a))
    if spec.identical_actions:
        transition[:] = transition[0]
        reward[:] = reward[:, :1]
    return TabularPomdp(
        transition=transition,
        observation=observation,
        reward_table=reward,
        initial_belief=np.full(x, 1.0 / x),
        horizon=spec.horizon,
        r_max=max(abs(lo), abs(hi)),
    )


BEACON_ACTIONS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True, eq=False)
class BeaconWorld:
    """2-D navigation with a range-dependent beacon sensor, a goal and three obstacles.

    States and observations are ``(n, 2)`` arrays. Observations are the
    position relative to the beacon.
    """

    beacon: np.ndarray
    goal: np.ndarray
    obstacles: np.ndarray
    start_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    start_cov_scale: float = 0.01
    horizon: int = 3
    v_max: float | None = None
    motion_var: float = 0.01
    near_var: float = 0.01
    goal_gain: float = 50.0
    goal_offset: float = 0.001
    obstacle_penalty: float = -50.0
    obstacle_radius: float = 1.0
    actions: np.ndarray = field(default_factory=lambda: BEACON_ACTIONS.copy())

    def __post_init__(self):
        for name in ("beacon", "goal", "start_mean"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (2,):
                raise ValidationError(name, "expected [x, y]")
            object.__setattr__(self, name, arr)
        obstacles = np.asarray(self.obstacles, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "obstacles", obstacles)
        if self.obstacle_radius <= 0:
            raise ValidationError("obstacle_radius", "must be positive")
        if self.near_var <= 0 or self.motion_var < 0 or self.start_cov_scale < 0:
            raise ValidationError("covariance", "variances must be positive")
        if self.v_max is None:
            object.__setattr__(self, "v_max", 5e4 * self.horizon)

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def obs_variance(self, states) -> np.ndarray:
        d = np.linalg.norm(np.atleast_2d(states) - self.beacon, axis=1)
        return np.where(d <= 1.0, self.near_var, self.near_var / np.maximum(d, 1.0))

    def sample_initial(self, n, rng):
        return self.start_mean + math.sqrt(self.start_cov_scale) * rng.standard_normal((n, 2))

    def sample_next(self, states, action, rng):
        states = np.atleast_2d(states)
        noise = rng.standard_normal(states.shape)
        return states + self.actions[action] + math.sqrt(self.motion_var) * noise

    def sample_obs(self, states, rng):
        states = np.atleast_2d(states)
        std = np.sqrt(self.obs_variance(states))[:, None]
        return states - self.beacon + std * rng.standard_normal(states.shape)

    def obs_loglik(self, z, states):
        states = np.atleast_2d(states)
        var = self.obs_variance(states)
        sq = np.sum((np.asarray(z) - (states - self.beacon)) ** 2, axis=1)
        return -np.log(2 * np.pi * var) - sq / (2 * var)

    def reward(self, states, action=0):
        states = np.atleast_2d(states)
        goal = self.goal_gain / (np.linalg.norm(states - self.goal, axis=1) + self.goal_offset)
        dist = np.linalg.norm(states[:, None, :] - self.obstacles[None, :, :], axis=2)
        hit = np.any(dist <= self.obstacle_radius, axis=1)
        return goal + np.where(hit, self.obstacle_penalty, 0.0)

    def to_dict(self) -> dict:
        return {
            "beacon": self.beacon.tolist(),
            "goal": self.goal.tolist(),
            "obstacles": self.obstacles.tolist(),
            "start_mean": self.start_mean.tolist(),
            "start_cov_scale": self.start_cov_scale,
            "vmax": self.v_max,
        }

    @classmethod
    def from_dict(cls, doc: dict, horizon: int = 3) -> "BeaconWorld":
        for key in ("beacon", "goal", "obstacles"):
            if key not in doc:
                raise ValidationError(key, "missing field")
        if len(doc["obstacles"]) != 3:
            raise ValidationError("obstacles", "expected three obstacle centers")
        return cls(
            beacon=doc["beacon"],
            goal=doc["goal"],
            obstacles=doc["obstacles"],
            start_mean=doc.get("start_mean", [0.0, 0.0]),
            start_cov_scale=float(doc.get("start_cov_scale", 0.01)),
            horizon=horizon,
            v_max=doc.get("vmax"),
        )

    @classmethod
    def load(cls, path, horizon: int = 3) -> "BeaconWorld":
        return cls.from_dict(json.loads(Path(path).read_text()), horizon)


def default_world(horizon: int = 3) -> BeaconWorld:
    """The bundled layout (``data/beacon_default.json``)."""
    text = resources.files("aotree").joinpath("data/beacon_default.json").read_text()
    return BeaconWorld.from_dict(json.loads(text), horizon)


def random_world(seed: int, horizon: int = 3) -> BeaconWorld:
    """Seeded layout: goal 6-9 moves away, obstacles kept off the start and goal."""
    rng = np.random.default_rng(seed)
    while True:
        goal = rng.integers(2, 6, size=2).astype(float)
        obstacles = rng.uniform(-1.0, 7.0, size=(3, 2))
        clear = lambda p: np.all(np.linalg.norm(obstacles - p, axis=1) > 1.5)
        if 6 <= goal.sum() <= 9 and clear(np.zeros(2)) and clear(goal):
            break
    beacon = rng.uniform(0.0, goal.max(), size=2)
    return BeaconWorld(beacon=beacon, goal=goal, obstacles=obstacles, horizon=horizon)


def beacon_obs_loglik(z, x, world: BeaconWorld) -> float:
    return float(world.obs_loglik(np.asarray(z, dtype=float), np.asarray(x, dtype=float))[0])


def beacon_reward(x, a, world: BeaconWorld) -> float:
    return float(world.reward(np.asarray(x, dtype=float), a)[0])


def beacon_step(x, a, rng, world: BeaconWorld) -> np.ndarray:
    return world.sample_next(np.asarray(x, dtype=float), a, rng)[0]
