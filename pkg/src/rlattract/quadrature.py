"""Graded meshes and product-integration weights for weakly singular kernels.

The solver and the attractivity scans integrate convolutions whose
kernels blow up like ``(t - tau)**(alpha-1)`` at the right endpoint and,
for the doubly singular variant, additionally like ``tau**(alpha-1)`` at
zero.  Product integration treats the kernel exactly and interpolates
only the regular cofactor piecewise-linearly on a mesh whose nodes
``t_j = T * (j/N)**p`` cluster at the origin.

Hot loops live in the selectable backends ``_kernels`` (numba) and
``_kernels_np`` (vectorized numpy); ``RLATTRACT_NO_NUMBA=1`` forces the
numpy path.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import DomainError
from .special_functions import beta_fn

__all__ = [
    "GradedMesh",
    "ConvolutionWeights",
    "build_mesh",
    "default_grading",
    "weights_single",
    "weights_double",
    "rl_integral",
    "rl_derivative_residual",
    "single_conv_row",
    "double_conv_row",
    "backend_name",
]

_GAUSS_POINTS = 8


def _select_backend():
    if os.environ.get("RLATTRACT_NO_NUMBA", "0") not in ("", "0"):
        from . import _kernels_np as impl
        return impl
    try:
        from . import _kernels as impl  # noqa: F811
        return impl
    except ImportError:
        from . import _kernels_np as impl
        return impl


_impl = _select_backend()


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _impl.BACKEND


@lru_cache(maxsize=64)
def _jacobi_rule(exponent: float):
    """Nodes/weights on (0, 1) integrating v**(exponent-1) * poly exactly."""
    x, w = roots_jacobi(_GAUSS_POINTS, 0.0, exponent - 1.0)
    v = 0.5 * (x + 1.0)
    lam = w * 0.5**exponent
    return np.ascontiguousarray(v), np.ascontiguousarray(lam)


@lru_cache(maxsize=1)
def _legendre_rule():
    x, w = roots_legendre(_GAUSS_POINTS)
    return np.ascontiguousarray(x), np.ascontiguousarray(w)


@dataclass(frozen=True, eq=False)
class GradedMesh:
    """Time grid t_j = T * (j/N)**p on [0, T], clustered at the origin."""

    horizon: float
    node_count: int
    grading: float
    nodes: np.ndarray = field(repr=False)

    @property
    def key(self):
        return (self.horizon, self.node_count, self.grading)


def default_grading(alpha: float) -> float:
    """Grading exponent resolving the t**(alpha-1) singularity under
    piecewise-linear interpolation of the weighted unknown."""
    return max(2.0, 2.0 / alpha)


def build_mesh(horizon: float, node_count: int, grading: float = 1.0) -> GradedMesh:
    """Construct the graded mesh; grading 1 is the uniform mesh."""
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise DomainError(f"build_mesh: horizon must be positive, got {horizon}")
    if node_count < 2:
        raise DomainError(f"build_mesh: need at least 2 intervals, got {node_count}")
    if not grading >= 1.0:
        raise DomainError(f"build_mesh: grading must be >= 1, got {grading}")
    j = np.arange(node_count + 1, dtype=float)
    nodes = horizon * (j / node_count) ** grading
    if np.any(np.diff(nodes) <= 0.0):
        raise DomainError(
            "build_mesh: grading too strong for this node count "
            "(nodes collapse in double precision)"
        )
    nodes.setflags(write=False)
    return GradedMesh(float(horizon), int(node_count), float(grading), nodes)


@dataclass(frozen=True, eq=False)
class ConvolutionWeights:
    """Triangular product-integration weight table.

    Row j integrates over [0, t_j]; ``w[j, k]`` multiplies the sample at
    ``t_k``.  ``kernel_kind`` is 'single_singular' for (t-tau)**(order-1)
    or 'double_singular' for the additional tau**(order-1) factor.
    """

    order: float
    kernel_kind: str
    mesh: GradedMesh
    w: np.ndarray = field(repr=False)


@lru_cache(maxsize=32)
def _single_table_cached(beta: float, mesh_key):
    horizon, n, p = mesh_key
    nodes = build_mesh(horizon, n, p).nodes
    table = _impl.single_table(nodes, beta)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=32)
def _double_table_cached(a: float, b: float, mesh_key):
    horizon, n, p = mesh_key
    nodes = build_mesh(horizon, n, p).nodes
    va, la = _jacobi_rule(a)
    vb, lb = _jacobi_rule(b)
    legx, legw = _legendre_rule()
    table = _impl.double_table(nodes, a, b, va, la, vb, lb, legx, legw, beta_fn(a, b))
    table.setflags(write=False)
    return table


def weights_single(alpha: float, mesh: GradedMesh) -> ConvolutionWeights:
    """Weights for the kernel (t_j - tau)**(alpha-1); exact for
    piecewise-linear integrands (closed-form panel moments)."""
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"weights_single: order must lie in (0, 1], got {alpha}")
    table = _single_table_cached(float(alpha), mesh.key)
    return ConvolutionWeights(float(alpha), "single_singular", mesh, table)


def weights_double(alpha: float, mesh: GradedMesh) -> ConvolutionWeights:
    """Weights for the doubly singular kernel
    (t_j - tau)**(alpha-1) * tau**(alpha-1)."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"weights_double: order must lie in (0, 1), got {alpha}")
    table = _double_table_cached(float(alpha), float(alpha), mesh.key)
    return ConvolutionWeights(float(alpha), "double_singular", mesh, table)


def mixed_weights(a: float, b: float, mesh: GradedMesh) -> np.ndarray:
    """Weight table for the kernel (t_j - tau)**(a-1) * tau**(b-1)."""
    if not (0.0 < a <= 1.0 and 0.0 < b <= 1.0):
        raise DomainError(f"mixed_weights: exponents must lie in (0, 1], got {a}, {b}")
    return _double_table_cached(float(a), float(b), mesh.key)


def single_conv_row(nodes: np.ndarray, t: float, beta: float) -> np.ndarray:
    """One weight row for kernel (t - tau)**(beta-1) on arbitrary sorted
    nodes spanning [0, t]."""
    return _impl.single_row(np.ascontiguousarray(nodes, dtype=float), float(t), float(beta))


def double_conv_row(nodes: np.ndarray, t: float, a: float, b: float) -> np.ndarray:
    """One weight row for kernel (t - tau)**(a-1) * tau**(b-1)."""
    va, la = _jacobi_rule(float(a))
    vb, lb = _jacobi_rule(float(b))
    legx, legw = _legendre_rule()
    return _impl.double_row(
        np.ascontiguousarray(nodes, dtype=float),
        float(t), float(a), float(b), va, la, vb, lb, legx, legw, beta_fn(a, b),
    )


def rl_integral(beta: float, mesh: GradedMesh, samples: np.ndarray) -> np.ndarray:
    """Fractional integral of order beta at the mesh nodes.

    ``samples`` are values of a function continuous on (0, T]; the value
    at t = 0 may be singular and only enters through the first panel's
    piecewise-linear interpolant.
    """
    if not (0.0 < beta <= 1.0):
        raise DomainError(f"rl_integral: order must lie in (0, 1], got {beta}")
    samples = np.asarray(samples, dtype=float)
    table = weights_single(beta, mesh).w
    return (table @ samples) / math.gamma(beta)


def rl_derivative_residual(
    alpha: float,
    mesh: GradedMesh,
    x_samples: np.ndarray,
    rhs_samples: np.ndarray,
) -> float:
    """Max defect of the fractional-derivative relation D^alpha x = rhs.

    Verified in integrated form: I^(1-alpha) x (t) - I^(1-alpha) x (t_1)
    must equal the integral of rhs from t_1 to t.  Working from the first
    positive node keeps every quantity finite even though x itself blows
    up like t**(alpha-1) at zero (the t = 0 samples are not used).
    Returns the maximum defect over interior nodes.
    """
    n = mesh.node_count
    if n < 8:
        raise DomainError("rl_derivative_residual: need at least 8 intervals")
    t = mesh.nodes
    x = np.asarray(x_samples, dtype=float)
    rhs = np.asarray(rhs_samples, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
        rhs = rhs[:, None]
    # weighted samples y = t**(1-alpha) x are the regular object; the t = 0
    # value is unrecoverable from x and is extrapolated from the first node
    y = np.empty_like(x)
    y[1:] = t[1:, None] ** (1.0 - alpha) * x[1:]
    y[0] = y[1]
    table = mixed_weights(1.0 - alpha, alpha, mesh)
    iw = (table @ y) / math.gamma(1.0 - alpha)
    # integral of rhs from t_1 (not t_0: rhs may be singular at zero and
    # its t = 0 sample is not used)
    dt = np.diff(t[1:])[:, None]
    seg = 0.5 * (rhs[1:-1] + rhs[2:]) * dt
    cum = np.zeros_like(x)
    cum[2:] = np.cumsum(seg, axis=0)
    phi = (iw - iw[1]) - cum
    defect = np.linalg.norm(phi[2:n], axis=1)
    return float(defect.max()) if defect.size else 0.0
