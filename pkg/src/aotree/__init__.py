"""Adaptive observation topologies for finite-horizon POMDP planning."""

from .envs import BeaconWorld, RandomPomdpSpec, default_world, gen_random_pomdp
from .errors import AotError, ValidationError
from .exact import (
    evaluate_bounds,
    identify_action,
    lower_bound,
    prune_dominated,
    q_optimal_full,
    qmdp_value,
    upper_bound,
)
from .planner import EXACT, SAMPLED, PlannerConfig, PlanResult, plan, replan_episode
from .pomdp import ParticleBelief, TabularPomdp
from .sparse import SampleParams, build_tree, concentration, estimate_lb, estimate_ub
from .topology import (
    RefinementSchedule,
    Topology,
    alternative_topology,
    full_topology,
    initial_topology,
    refine,
)

__version__ = "0.1.0"
