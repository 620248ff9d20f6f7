"""Robust factored MDPs.

Exact and relaxed robust dynamic programming over products of marginal
uncertainty sets, plus model-based PAC learning of those sets from sampled
trajectories.
"""

from .environments import (
    BenchmarkSpec,
    bundled_environments,
    chain,
    frozenlake,
    generate_benchmark,
    mini_chain,
    mini_frozenlake,
    mini_stock,
    mini_sysadmin,
    perturb_to_rfmdp,
    stock,
    sysadmin,
)
from .errors import (
    CapExceededError,
    ConfigError,
    DivergenceError,
    DomainError,
    EmptySetError,
    ModelError,
    NoDataError,
    RfmdpError,
    SolverError,
    StateRangeError,
    ValidationError,
)
from .inner import (
    BACKENDS,
    BEST,
    WORST,
    InnerProblem,
    InnerResult,
    build_mccormick_lp,
    interval_arithmetic_product,
    mccormick_worst_case,
    solve_inner,
    spurious_membership_check,
    worst_case_box_greedy,
    worst_case_interval_arithmetic,
    worst_case_l1,
    worst_case_l1_radius_sum,
    worst_case_vertex_product,
)
from .learner import (
    ConfidenceBudget,
    LearningConfig,
    LearningTrace,
    ModelSampler,
    TransitionCounts,
    build_learned_rfmdp,
    empirical_estimates,
    learning_loop,
    pac_report,
    record_transitions,
    split_confidence,
    trajectories_to_target,
)
from .lp import LinearProgram, LpSolution, solve_lp
from .model import (
    DependencyFunction,
    Factor,
    FactoredMdp,
    FlatMdp,
    Objective,
    decode_state,
    encode_state,
    flat_structure,
    flatten,
    transition_distribution,
    validate_fmdp,
)
from .solver import (
    RfMdp,
    RobustSolution,
    evaluate_policy_nominal,
    evaluate_policy_robust,
    rfmdp_from_points,
    robust_bellman_backup,
    solve_rfmdp,
    value_iteration_nominal,
)
from .uncertainty import (
    BoxSet,
    L1Set,
    VertexPolytope,
    beta_quantile,
    box_hull_of_l1,
    build_box_set,
    build_l1_set,
    clopper_pearson,
    compose_l1_radius_sum,
    enumerate_box_vertices,
    estimate_box_vertex_count,
    perturb_row,
    weissman_radius,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BACKENDS",
    "BenchmarkSpec",
    "BEST",
    "beta_quantile",
    "box_hull_of_l1",
    "BoxSet",
    "build_box_set",
    "build_l1_set",
    "build_learned_rfmdp",
    "build_mccormick_lp",
    "bundled_environments",
    "CapExceededError",
    "chain",
    "clopper_pearson",
    "compose_l1_radius_sum",
    "ConfidenceBudget",
    "ConfigError",
    "decode_state",
    "DependencyFunction",
    "DivergenceError",
    "DomainError",
    "empirical_estimates",
    "EmptySetError",
    "encode_state",
    "enumerate_box_vertices",
    "estimate_box_vertex_count",
    "evaluate_policy_nominal",
    "evaluate_policy_robust",
    "Factor",
    "FactoredMdp",
    "flat_structure",
    "FlatMdp",
    "flatten",
    "frozenlake",
    "generate_benchmark",
    "InnerProblem",
    "InnerResult",
    "interval_arithmetic_product",
    "L1Set",
    "LinearProgram",
    "LpSolution",
    "learning_loop",
    "LearningConfig",
    "LearningTrace",
    "mccormick_worst_case",
    "mini_chain",
    "mini_frozenlake",
    "mini_stock",
    "mini_sysadmin",
    "ModelError",
    "ModelSampler",
    "NoDataError",
    "Objective",
    "pac_report",
    "perturb_row",
    "perturb_to_rfmdp",
    "record_transitions",
    "RfMdp",
    "rfmdp_from_points",
    "RfmdpError",
    "robust_bellman_backup",
    "RobustSolution",
    "solve_inner",
    "solve_lp",
    "solve_rfmdp",
    "SolverError",
    "split_confidence",
    "spurious_membership_check",
    "StateRangeError",
    "stock",
    "sysadmin",
    "trajectories_to_target",
    "transition_distribution",
    "TransitionCounts",
    "validate_fmdp",
    "ValidationError",
    "value_iteration_nominal",
    "VertexPolytope",
    "weissman_radius",
    "WORST",
    "worst_case_box_greedy",
    "worst_case_interval_arithmetic",
    "worst_case_l1",
    "worst_case_l1_radius_sum",
    "worst_case_vertex_product",
]
