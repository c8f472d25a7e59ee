import numpy as np
import pytest

from aotree.envs import RandomPomdpSpec, gen_random_pomdp
from aotree.pomdp import TabularPomdp


def small_instance(seed, horizon=None, max_states=4, max_actions=3, max_obs=4):
    """Seeded random instance within the oracle-checkable size limits."""
    rng = np.random.default_rng(10_000 + seed)
    spec = RandomPomdpSpec(
        num_states=int(rng.integers(1, max_states + 1)),
        num_actions=int(rng.integers(1, max_actions + 1)),
        num_observations=int(rng.integers(1, max_obs + 1)),
        seed=seed,
        reward_range=(-1.0, 1.0),
        horizon=int(horizon or rng.integers(1, 4)),
    )
    return gen_random_pomdp(spec)


@pytest.fixture
def two_state():
    T = np.array([[[0.3, 0.7], [0.0, 1.0]], [[1.0, 0.0], [0.5, 0.5]]])
    O = np.array([[0.8, 0.2], [0.3, 0.7]])
    R = np.array([[1.0, 0.0], [0.0, 2.0]])
    return TabularPomdp(T, O, R, np.array([0.5, 0.5]), horizon=2)


_ACCEPTANCE_LINES = []


def record(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
