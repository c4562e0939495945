"""Stochastic optimal control of slow/fast bilinear systems.

Simulates the forward diffusion, solves the associated backward equation by
least-squares Monte Carlo, computes the homogenized reduced problem, and
cross-checks values against Riccati / log-exponential / quadrature oracles.
"""

from .errors import (
    BadGrid,
    ConfigError,
    DegenerateDesign,
    DegenerateExponential,
    DimensionMismatch,
    InitialStateOutsideDomain,
    NonpositiveEps,
    NotHurwitz,
    NotRepresentable,
    QuadratureFallbackWarning,
    RangeConditionViolated,
    RankDeficientWarning,
    SfControlError,
    SingularA22,
    StepTooCoarse,
)
from .fbsde import (
    BasisSet,
    ControlledCostEstimate,
    ValueField,
    apply_control_and_cost,
    backward_solve,
    build_basis,
    evaluate_Z,
    evaluate_gradient,
    evaluate_value,
    extract_control,
)
from .linalg import (
    LeastSquaresSolution,
    is_hurwitz,
    kalman_controllable,
    pseudoinverse,
    solve_least_squares,
    solve_lyapunov,
)
from .model import (
    AssembledSystem,
    Ball,
    Box,
    ConditionReport,
    QuadraticCost,
    QuadraticDriver,
    SlowFastSystem,
    assemble,
    driver_f,
    make_driver,
    running_cost_q0,
    terminal_cost_q1,
    validate_condition_lq,
)
from .oracles import (
    MonteCarloValue,
    QuadratureResult,
    RiccatiSolution,
    feynman_kac_value,
    quadrature_average_driver,
    riccati_solve,
)
from .reduction import (
    AveragedDriverCoefficients,
    ReducedSystem,
    averaged_driver,
    invariant_covariance,
    reduce_system,
    reduced_control_system,
    reduced_driver,
    reduced_forward,
    reduced_slowfast,
)
from .rng import derive_seed, sample_increments
from .sde import PathEnsemble, ensemble_to_csv, simulate

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
