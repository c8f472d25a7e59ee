"""POMDP models, beliefs and belief-update operators.

Discrete beliefs are plain 1-D numpy arrays over states. Particle beliefs
carry unnormalized weights; consumers normalize on use.

Both model kinds expose the same batched sampler interface so the sparse
estimator has one code path:

    sample_initial(n, rng) -> states
    sample_next(states, action, rng) -> states
    sample_obs(states, rng) -> one observation per state
    obs_loglik(z, states) -> log p(z | state) per state
    reward(states, action) -> r(state, action) per state

For a tabular model, states and observations are integer indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Protocol, Sequence, Union

import numpy as np

from .errors import DegenerateWeights, TagMismatch, ValidationError, ZeroLikelihood

STOCHASTIC_TOL = 1e-9
ZERO_LIKELIHOOD = 1e-300


class GenerativePomdp(Protocol):
    """Sampler/likelihood interface used by the sparse estimator."""

    num_actions: int
    horizon: int

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray: ...

    def sample_next(self, states: np.ndarray, action: int, rng: np.random.Generator) -> np.ndarray: ...

    def sample_obs(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def obs_loglik(self, z, states: np.ndarray) -> np.ndarray: ...

    def reward(self, states: np.ndarray, action: int) -> np.ndarray: ...


def _check_stochastic(field, arr):
    if np.any(~np.isfinite(arr)):
        raise ValidationError(field, "entries must be finite")
    flat = arr.reshape(-1, arr.shape[-1])
    for i, row in enumerate(flat):
        if np.any(row < 0):
            raise ValidationError(field, "negative probability", row=_row_label(i, arr.shape))
        if abs(row.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValidationError(
                field, f"row sums to {row.sum():.12g}, expected 1", row=_row_label(i, arr.shape)
            )


def _row_label(i, shape):
    if len(shape) == 2:
        return i
    return ",".join(str(k) for k in np.unravel_index(i, shape[:-1]))


@dataclass(frozen=True, eq=False)
class TabularPomdp:
    """Finite POMDP with ``transition[a, x, x']``, ``observation[x, z]`` and ``reward[x, a]``."""

    transition: np.ndarray
    observation: np.ndarray
    reward_table: np.ndarray
    initial_belief: np.ndarray
    horizon: int
    r_max: float | None = None

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        o = np.asarray(self.observation, dtype=float)
        r = np.asarray(self.reward_table, dtype=float)
        b0 = np.asarray(self.initial_belief, dtype=float)
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ValidationError("transition", f"expected shape [A][X][X], got {list(t.shape)}")
        num_a, num_x = t.shape[0], t.shape[1]
        if num_a < 1:
            raise ValidationError("num_actions", "must be a positive integer")
        if num_x < 1:
            raise ValidationError("num_states", "must be a positive integer")
        if o.ndim != 2 or o.shape[0] != num_x or o.shape[1] < 1:
            raise ValidationError("observation", f"expected shape [{num_x}][Z], got {list(o.shape)}")
        if r.shape != (num_x, num_a):
            raise ValidationError("reward", f"expected shape [{num_x}][{num_a}], got {list(r.shape)}")
        if b0.shape != (num_x,):
            raise ValidationError("initial_belief", f"expected length {num_x}, got {list(b0.shape)}")
        _check_stochastic("transition", t)
        _check_stochastic("observation", o)
        if np.any(~np.isfinite(r)):
            raise ValidationError("reward", "entries must be finite")
        if np.any(b0 < 0) or abs(b0.sum() - 1.0) > STOCHASTIC_TOL or np.any(~np.isfinite(b0)):
            raise ValidationError("initial_belief", "must be a probability vector")
        r_max = float(np.abs(r).max()) if self.r_max is None else float(self.r_max)
        if not np.isfinite(r_max) or np.abs(r).max() > r_max + 1e-12:
            raise ValidationError("r_max", "must bound |reward| everywhere")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValidationError("horizon", "must be an integer >= 1")
        for name, value in (
            ("transition", t),
            ("observation", o),
            ("reward_table", r),
            ("initial_belief", b0),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "r_max", r_max)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def num_states(self) -> int:
        return self.transition.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[0]

    @property
    def num_observations(self) -> int:
        return self.observation.shape[1]

    @cached_property
    def _transition_cdf(self):
        cdf = np.cumsum(self.transition, axis=2)
        cdf[..., -1] = 1.0
        return cdf

    @cached_property
    def _observation_cdf(self):
        cdf = np.cumsum(self.observation, axis=1)
        cdf[:, -1] = 1.0
        return cdf

    @cached_property
    def _log_observation(self):
        with np.errstate(divide="ignore"):
            return np.log(self.observation)

    # batched sampler interface

    def sample_initial(self, n, rng):
        cdf = np.cumsum(self.initial_belief)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(n), side="right")

    def sample_next(self, states, action, rng):
        states = np.asarray(states, dtype=np.intp)
        rows = self._transition_cdf[action][states]
        u = rng.random(len(states))
        return (rows <= u[:, None]).sum(axis=1)

    def sample_obs(self, states, rng):
        states = np.asarray(states, dtype=np.intp)
        rows = self._observation_cdf[states]
        u = rng.random(len(states))
        return (rows <= u[:, None]).sum(axis=1)

    def obs_loglik(self, z, states):
        return self._log_observation[np.asarray(states, dtype=np.intp), int(z)]

    def reward(self, states, action):
        return self.reward_table[np.asarray(states, dtype=np.intp), action]

    # serialization

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "num_observations": self.num_observations,
            "transition": self.transition.tolist(),
            "observation": self.observation.tolist(),
            "reward": self.reward_table.tolist(),
            "r_max": self.r_max,
            "initial_belief": self.initial_belief.tolist(),
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularPomdp":
        required = (
            "num_states",
            "num_actions",
            "num_observations",
            "transition",
            "observation",
            "reward",
            "initial_belief",
            "horizon",
        )
        for key in required:
            if key not in doc:
                raise ValidationError(key, "missing field")
        for key in ("num_states", "num_actions", "num_observations"):
            v = doc[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(key, "must be a positive integer")
        num_x, num_a, num_z = doc["num_states"], doc["num_actions"], doc["num_observations"]
        arrays = {}
        for key, shape in (
            ("transition", (num_a, num_x, num_x)),
            ("observation", (num_x, num_z)),
            ("reward", (num_x, num_a)),
            ("initial_belief", (num_x,)),
        ):
            try:
                arr = np.asarray(doc[key], dtype=float)
            except (TypeError, ValueError) as exc:
                raise ValidationError(key, f"not a numeric array ({exc})") from None
            if arr.shape != shape:
                raise ValidationError(key, f"expected shape {list(shape)}, got {list(arr.shape)}")
            arrays[key] = arr
        return cls(
            transition=arrays["transition"],
            observation=arrays["observation"],
            reward_table=arrays["reward"],
            initial_belief=arrays["initial_belief"],
            horizon=doc["horizon"],
            r_max=doc.get("r_max"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "TabularPomdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class ParticleBelief:
    """Weighted state samples. Weights are unnormalized."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        particles = np.asarray(self.particles)
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or len(particles) != len(weights):
            raise ValueError("particles and weights must have equal length")
        if len(weights) == 0 or np.any(weights < 0) or not np.any(weights > 0):
            raise DegenerateWeights("particle belief needs a positive weight")
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, particles) -> "ParticleBelief":
        particles = np.asarray(particles)
        return cls(particles, np.ones(len(particles)))

    def __len__(self):
        return len(self.weights)

    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def resample_indices(self, n, rng) -> np.ndarray:
        if len(self.weights) == 1:
            return np.zeros(n, dtype=np.intp)
        cdf = np.cumsum(self.weights)
        return np.minimum(
            np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"), len(cdf) - 1
        )

    def sample_states(self, n, rng) -> np.ndarray:
        return self.particles[self.resample_indices(n, rng)]


@dataclass(frozen=True)
class Original:
    """Observation from the model's own observation space."""

    z: object


@dataclass(frozen=True)
class Revealed:
    """Observation from the alternative space: the state itself."""

    x: int


AugObservation = Union[Original, Revealed]
Belief = Union[np.ndarray, ParticleBelief]


def as_belief(probabilities: Sequence[float]) -> np.ndarray:
    b = np.asarray(probabilities, dtype=float)
    if b.ndim != 1 or np.any(b < 0) or abs(b.sum() - 1.0) > STOCHASTIC_TOL:
        raise ValueError("belief must be a probability vector")
    return b


def point_mass(num_states: int, x: int) -> np.ndarray:
    b = np.zeros(num_states)
    b[x] = 1.0
    return b


def _check_action(action, model):
    if not 0 <= action < model.num_actions:
        raise ValueError(f"action {action} out of range for {model.num_actions} actions")


def propagate(belief, action, model: TabularPomdp) -> np.ndarray:
    """Prediction step: ``b-(x') = sum_x b(x) T[a, x, x']``."""
    _check_action(action, model)
    return np.asarray(belief) @ model.transition[action]


def bayes_update_original(propagated, z, model: TabularPomdp) -> np.ndarray:
    joint = np.asarray(propagated) * model.observation[:, z]
    eta = joint.sum()
    if eta <= ZERO_LIKELIHOOD:
        raise ZeroLikelihood(f"observation {z} has likelihood {eta:g} under the propagated belief")
    return joint / eta


def bayes_update_alternative(propagated, o) -> np.ndarray:
    """Dirac update for a revealed state ``o``."""
    propagated = np.asarray(propagated)
    if not 0 <= o < len(propagated) or propagated[o] <= 0:
        raise ZeroLikelihood(f"state {o} has no propagated mass")
    return point_mass(len(propagated), o)


def augmented_update(belief, action, obs: AugObservation, beta: int, model: TabularPomdp):
    """Belief update under the regime selected by ``beta`` (1 original, 0 alternative)."""
    if beta == 1 and isinstance(obs, Original):
        return bayes_update_original(propagate(belief, action, model), obs.z, model)
    if beta == 0 and isinstance(obs, Revealed):
        return bayes_update_alternative(propagate(belief, action, model), obs.x)
    raise TagMismatch(f"{type(obs).__name__} observation at a node with beta={beta}")


def belief_reward(belief: Belief, action, model) -> float:
    """Expected state-dependent reward ``E_{x~b} r(x, a)``."""
    if isinstance(belief, ParticleBelief):
        w = belief.normalized_weights()
        return float(w @ model.reward(belief.particles, action))
    return float(np.asarray(belief) @ model.reward_table[:, action])


def particle_propagate(belief: ParticleBelief, action, model, n, rng) -> ParticleBelief:
    """Bootstrap-resample ``n`` sources by weight and push each through the transition."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sources = belief.sample_states(n, rng)
    return ParticleBelief(model.sample_next(sources, action, rng), np.ones(n))


def particle_reweight(belief: ParticleBelief, z, model) -> ParticleBelief:
    """Multiply weights by ``p(z | x)``.

    The likelihood is applied in log space and shifted by its maximum, so the
    result equals ``w * p(z|x)`` up to one global factor.
    """
    loglik = np.asarray(model.obs_loglik(z, belief.particles), dtype=float)
    live = belief.weights > 0
    top = np.max(loglik[live]) if np.any(live) else -np.inf
    if not np.isfinite(top):
        raise DegenerateWeights(f"observation {z!r} has zero likelihood for every particle")
    weights = belief.weights * np.exp(loglik - top)
    if not np.any(weights > 0):
        raise DegenerateWeights(f"weights underflowed to zero for observation {z!r}")
    return ParticleBelief(belief.particles, weights)
