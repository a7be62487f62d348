"""Parallel block-coordinate solvers for composite minimization.

Minimizes ``V(x) = F(x) + G(x)`` over a coordinate box, with smooth
(possibly nonconvex) ``F`` and block-separable convex ``G``, via flexible
inexact parallel block updates, Gauss-Jacobi hybrids, and first-order
baselines.
"""

from .control import (
    EpsSchedule,
    SelectionRule,
    StepSchedule,
    TauPolicy,
    error_bound,
    merit_value,
    relative_error,
    select,
    step_update,
    tau_update,
)
from .baselines import fista_solve, sparsa_solve
from .errors import (
    CurvatureError,
    NumericError,
    ParseError,
    StructuralError,
    UnsupportedConfigError,
)
from .model import (
    BlockStructure,
    FeasibleSet,
    ProblemInstance,
    SeparableRegularizer,
    SmoothOracle,
    block_soft_threshold,
    eval_V,
    soft_threshold,
    stationarity_residual,
)
from .problems import (
    GenerationError,
    LogisticOracle,
    QuadraticOracle,
    group_lasso_instance,
    lasso_instance,
    load_instance_dir,
    logistic_instance,
    ncvxqp_generate,
    ncvxqp_instance,
    nesterov_generate,
    read_libsvm,
    save_instance_dir,
    write_libsvm,
)
from .solvers import (
    RunTrace,
    SolveStatus,
    SolverConfig,
    flexa_solve,
    gauss_jacobi_solve,
    gj_selection_solve,
    solve,
)
from .subprob import (
    ApproximationKind,
    ProxWeights,
    best_response_block,
    best_response_full,
    subproblem_curvature,
    tau_floors,
)

__version__ = "0.1.0"

__all__ = [
    "ApproximationKind",
    "BlockStructure",
    "CurvatureError",
    "EpsSchedule",
    "FeasibleSet",
    "GenerationError",
    "LogisticOracle",
    "NumericError",
    "ParseError",
    "ProblemInstance",
    "ProxWeights",
    "QuadraticOracle",
    "RunTrace",
    "SelectionRule",
    "SeparableRegularizer",
    "SmoothOracle",
    "SolveStatus",
    "SolverConfig",
    "StepSchedule",
    "StructuralError",
    "TauPolicy",
    "UnsupportedConfigError",
    "best_response_block",
    "best_response_full",
    "block_soft_threshold",
    "error_bound",
    "eval_V",
    "fista_solve",
    "flexa_solve",
    "gauss_jacobi_solve",
    "gj_selection_solve",
    "group_lasso_instance",
    "lasso_instance",
    "load_instance_dir",
    "logistic_instance",
    "merit_value",
    "ncvxqp_generate",
    "ncvxqp_instance",
    "nesterov_generate",
    "read_libsvm",
    "relative_error",
    "save_instance_dir",
    "select",
    "soft_threshold",
    "solve",
    "sparsa_solve",
    "stationarity_residual",
    "step_update",
    "subproblem_curvature",
    "tau_floors",
    "tau_update",
    "write_libsvm",
]
