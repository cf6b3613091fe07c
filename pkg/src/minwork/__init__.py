"""Scheduling analysis for a single server whose service probability
depends on an activity state driven by its own work/rest history.

The package computes stationary rates of the reduced server-only
chain, the infimum-utilization frontier and its LP counterpart,
synthesizes near-optimal stabilizing policies for the full
server-plus-queue chain, and checks the results by exact truncated
analysis and seeded simulation.
"""

from .chain import (
    DaggerDecomposition,
    MixingConstants,
    NonUniqueStationaryError,
    PotentialFunction,
    communicating_classes,
    dagger_rates,
    decompose_dagger_policy,
    max_service_rate,
    mixing_constants,
    potential_function,
    service_rate,
    service_reward,
    stationary_pmf,
    stationary_pmf_y,
    threshold_policy,
    threshold_rates,
    utilization_rate_y,
)
from .frontier import (
    Frontier,
    LpResult,
    NotStabilizableError,
    OccupationMeasure,
    frontier,
    infimum_utilization,
    lower_convex_hull,
    occupation_from_policy,
    policy_from_occupation,
    solve_lp,
)
from .model import (
    Action,
    Availability,
    NumericalFailure,
    PolicyX,
    PolicyY,
    ServerSpec,
    ServerState,
    SystemState,
    activity_transition,
    admissible_actions_x,
    admissible_actions_y,
    load_spec,
    x_transition,
    y_index,
    y_state,
    ybar_kernel,
    ybar_matrix,
)
from .sim import (
    HittingStats,
    SimConfig,
    SimResult,
    TabularPolicyX,
    TruncatedPMF,
    empty_queue_mass,
    hitting_time_stats,
    simulate,
    truncated_service_rate,
    truncated_stationary,
    truncated_stationary_auto,
    truncated_utilization,
    y_marginal_distance,
)
from .simplex import SimplexResult, solve_simplex
from .synthesis import (
    GapUnachievableError,
    ProjectionUndefinedError,
    SynthesisResult,
    classify_stability,
    lift_policy,
    project_policy,
    synthesize,
)
from .verify import CheckResult, run_all

__all__ = [
    "Action",
    "Availability",
    "CheckResult",
    "DaggerDecomposition",
    "Frontier",
    "GapUnachievableError",
    "HittingStats",
    "LpResult",
    "MixingConstants",
    "NonUniqueStationaryError",
    "NotStabilizableError",
    "NumericalFailure",
    "OccupationMeasure",
    "PolicyX",
    "PolicyY",
    "PotentialFunction",
    "ProjectionUndefinedError",
    "ServerSpec",
    "ServerState",
    "SimConfig",
    "SimResult",
    "SimplexResult",
    "SynthesisResult",
    "SystemState",
    "TabularPolicyX",
    "TruncatedPMF",
    "activity_transition",
    "admissible_actions_x",
    "admissible_actions_y",
    "classify_stability",
    "communicating_classes",
    "dagger_rates",
    "decompose_dagger_policy",
    "empty_queue_mass",
    "frontier",
    "hitting_time_stats",
    "infimum_utilization",
    "lift_policy",
    "load_spec",
    "lower_convex_hull",
    "max_service_rate",
    "mixing_constants",
    "occupation_from_policy",
    "policy_from_occupation",
    "potential_function",
    "project_policy",
    "run_all",
    "service_rate",
    "service_reward",
    "simulate",
    "solve_lp",
    "solve_simplex",
    "stationary_pmf",
    "stationary_pmf_y",
    "synthesize",
    "threshold_policy",
    "threshold_rates",
    "truncated_service_rate",
    "truncated_stationary",
    "truncated_stationary_auto",
    "truncated_utilization",
    "utilization_rate_y",
    "x_transition",
    "y_index",
    "y_marginal_distance",
    "y_state",
    "ybar_kernel",
    "ybar_matrix",
]
