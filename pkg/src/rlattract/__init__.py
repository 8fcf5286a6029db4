"""Solver and attractivity certification for Riemann-Liouville fractional
linear systems, built on Mittag-Leffler resolvent kernels and graded-mesh
product integration.

Convention used throughout: initial values are prescribed in the weighted
sense ``lim t**(1-alpha) x(t) = x0``, so homogeneous linear solutions are
``x(t) = Gamma(alpha) t**(alpha-1) E(alpha, alpha; t**alpha A) x0``.
"""

__version__ = "0.1.0"

from .attractivity import (
    AttractivityCertificate,
    ScanGrid,
    SectorReport,
    certify,
    contraction_q,
    corollary_threshold,
    decay_check,
    g_forcing_bound,
    kernel_double_conv_sup,
    kernel_tail_bound,
    qin_probe,
    sector_check,
)
from .errors import (
    AccuracyError,
    ConvergenceError,
    DomainError,
    ExprDomainError,
    ExprSyntaxError,
    InputError,
    InvariantViolation,
    RLAttractError,
)
from .quadrature import (
    ConvolutionWeights,
    GradedMesh,
    build_mesh,
    default_grading,
    rl_derivative_residual,
    rl_integral,
    weights_double,
    weights_single,
)
from .solver import (
    BieleckiNorm,
    IVProblem,
    LinearSystem,
    WeightedTrajectory,
    bielecki_norm,
    picard_diagnostics,
    solve_ivp,
    solve_linear_voc,
    weighted_sup_norm,
)
from .special_functions import MLIndex, beta_fn, gamma_fn, ml_kernel, ml_matrix, ml_scalar

__all__ = [
    "__version__",
    "AccuracyError",
    "AttractivityCertificate",
    "BieleckiNorm",
    "ConvergenceError",
    "ConvolutionWeights",
    "DomainError",
    "ExprDomainError",
    "ExprSyntaxError",
    "GradedMesh",
    "IVProblem",
    "InputError",
    "InvariantViolation",
    "LinearSystem",
    "MLIndex",
    "RLAttractError",
    "ScanGrid",
    "SectorReport",
    "WeightedTrajectory",
    "beta_fn",
    "bielecki_norm",
    "build_mesh",
    "certify",
    "contraction_q",
    "corollary_threshold",
    "decay_check",
    "default_grading",
    "g_forcing_bound",
    "gamma_fn",
    "kernel_double_conv_sup",
    "kernel_tail_bound",
    "ml_kernel",
    "ml_matrix",
    "ml_scalar",
    "picard_diagnostics",
    "qin_probe",
    "rl_derivative_residual",
    "rl_integral",
    "sector_check",
    "solve_ivp",
    "solve_linear_voc",
    "weighted_sup_norm",
    "weights_double",
    "weights_single",
]
