"""Simulation and control synthesis for a two-species competition system in 1D."""

from .comparison import check_subsuper_pair, monitor_constraints
from .control_synthesis import (
    SurvivalTarget,
    neumann_trace_controls,
    overshoot_release_controls,
    single_species_controls,
    two_phase_steering,
)
from .discretization import (
    NEUMANN,
    Dirichlet,
    EigenResult,
    Field,
    Grid,
    Neumann,
    apply_laplacian,
    build_grid,
    principal_eigenvalue,
)
from .elliptic import (
    SteadyClass,
    SteadyPair,
    coexistence_target,
    homogeneous_coexistence,
    probe_uniqueness,
    solve_logistic_theta,
    solve_steady_system,
)
from .model import Params, RegimeReport, FreeOutcome, classify_regime, validate_params
from .optimal_control import (
    ALL_DOFS,
    BOUNDARY_DOFS,
    MinTimeResult,
    OCProblem,
    OCResult,
    minimum_time,
    objective_and_gradient,
    solve_fixed_horizon,
)
from .parabolic import (
    BCKind,
    ControlSet,
    StatePair,
    TargetEquation,
    Trajectory,
    make_controls,
    run_until_near,
    simulate,
)

__all__ = [
    "ALL_DOFS",
    "BCKind",
    "BOUNDARY_DOFS",
    "MinTimeResult",
    "ControlSet",
    "Dirichlet",
    "EigenResult",
    "Field",
    "Grid",
    "NEUMANN",
    "Neumann",
    "OCProblem",
    "OCResult",
    "Params",
    "RegimeReport",
    "StatePair",
    "SteadyClass",
    "SteadyPair",
    "SurvivalTarget",
    "TargetEquation",
    "FreeOutcome",
    "Trajectory",
    "apply_laplacian",
    "build_grid",
    "check_subsuper_pair",
    "classify_regime",
    "coexistence_target",
    "homogeneous_coexistence",
    "make_controls",
    "minimum_time",
    "monitor_constraints",
    "neumann_trace_controls",
    "objective_and_gradient",
    "overshoot_release_controls",
    "principal_eigenvalue",
    "probe_uniqueness",
    "run_until_near",
    "simulate",
    "single_species_controls",
    "solve_fixed_horizon",
    "solve_logistic_theta",
    "solve_steady_system",
    "two_phase_steering",
    "validate_params",
]

__version__ = "0.1.0"
