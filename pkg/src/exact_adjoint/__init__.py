"""Exact gradients of Runge-Kutta and partitioned Runge-Kutta solutions
with respect to the initial condition, via matched adjoint sweeps."""

from .errors import (
    ConfigError,
    DomainError,
    ExactAdjointError,
    NonConvergenceError,
    NumericalError,
    ZeroWeightError,
)
from .integrate import ForwardTrajectory, SolverConfig, integrate, integrate_prk, integrate_rk
from .methods import get_method
from .ode import (
    CostFunction,
    OdeSystem,
    PartitionedOdeSystem,
    Problem,
    as_plain,
    builtin_problem,
    quadratic_cost,
)
from .oracle import (
    GradientComparison,
    compare,
    fd_gradient,
    forward_sensitivity_gradient,
    linear_exact_gradient,
)
from .sensitivity import (
    AdjointRun,
    GradientResult,
    adjoint_gprk,
    adjoint_prk,
    adjoint_rk,
    exact_gradient,
    pairing_drift,
    variational_prk,
    variational_rk,
)
from .tableau import (
    ButcherTableau,
    ConditionReport,
    GprkTableau,
    PartitionedTableau,
    check_gprk_conditions,
    check_rk_adjoint_conditions,
    check_symplecticity_conditions,
    is_reducible_to_prk,
    synthesize_adjoint_rk,
    synthesize_gprk,
)

__version__ = "0.1.0"

__all__ = [
    "adjoint_gprk",
    "adjoint_prk",
    "adjoint_rk",
    "AdjointRun",
    "as_plain",
    "builtin_problem",
    "ButcherTableau",
    "check_gprk_conditions",
    "check_rk_adjoint_conditions",
    "check_symplecticity_conditions",
    "compare",
    "ConditionReport",
    "ConfigError",
    "CostFunction",
    "DomainError",
    "exact_gradient",
    "ExactAdjointError",
    "fd_gradient",
    "forward_sensitivity_gradient",
    "ForwardTrajectory",
    "get_method",
    "GprkTableau",
    "GradientComparison",
    "GradientResult",
    "integrate",
    "integrate_prk",
    "integrate_rk",
    "is_reducible_to_prk",
    "linear_exact_gradient",
    "NonConvergenceError",
    "NumericalError",
    "OdeSystem",
    "pairing_drift",
    "PartitionedOdeSystem",
    "PartitionedTableau",
    "Problem",
    "quadratic_cost",
    "SolverConfig",
    "synthesize_adjoint_rk",
    "synthesize_gprk",
    "variational_prk",
    "variational_rk",
    "ZeroWeightError",
]
