"""Initial-value solver for fractional systems in the weighted unknown.

A solution of ``D^alpha x = f(t, x)`` with ``lim t**(1-alpha) x(t) = x0``
behaves like ``x0 * t**(alpha-1)`` at the origin, so the solver never
stores ``x`` itself.  It works with ``y(t) = t**(1-alpha) x(t)``, which
is continuous with ``y(0) = x0``, and discretizes the equivalent
integral equation

    y(t) = x0 + t**(1-alpha)/Gamma(alpha) *
           integral (t-tau)**(alpha-1) tau**(alpha-1) F(tau, y(tau)) dtau

with ``F(tau, y) = tau**(1-alpha) f(tau, tau**(alpha-1) y)`` against the
doubly singular product-integration weights.

Convention: the homogeneous linear solution is
``x(t) = Gamma(alpha) * t**(alpha-1) * E(alpha, alpha; t**alpha A) x0``;
the Gamma(alpha) prefactor is forced by the weighted initial condition
since ``t**(1-alpha) * t**(alpha-1) E(...) -> I/Gamma(alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import wofz

from .errors import ConvergenceError, DomainError, InputError, InvariantViolation
from .quadrature import GradedMesh, double_conv_row, weights_double
from .special_functions import MLIndex, ml_matrix, ml_scalar

__all__ = [
    "IVProblem",
    "LinearSystem",
    "WeightedTrajectory",
    "BieleckiNorm",
    "PicardReport",
    "ResolventEvaluator",
    "solve_ivp",
    "solve_linear_voc",
    "bielecki_norm",
    "weighted_sup_norm",
    "picard_diagnostics",
]

_SQRT_PI = math.sqrt(math.pi)


@dataclass
class IVProblem:
    """Initial-value problem D^alpha x = f(t, x), lim t**(1-alpha) x = x0.

    ``lipschitz`` is the bound L with ||f(t,x)-f(t,y)|| <= L ||x-y||,
    either a constant or a function of t; it is required only by the
    Picard diagnostics.
    """

    alpha: float
    rhs: Callable[[float, np.ndarray], np.ndarray]
    x0: np.ndarray
    lipschitz: Optional[float | Callable[[float], float]] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"IVProblem: alpha must lie in (0, 1), got {self.alpha}")
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))

    @property
    def dimension(self) -> int:
        return self.x0.size


@dataclass
class LinearSystem:
    """D^alpha x = A x + Q(t) x + g(t) with continuous Q and g.

    ``q`` and ``g`` are callables of t returning an (s, s) matrix and an
    (s,) vector; either may be None for the zero map.
    """

    alpha: float
    a_matrix: np.ndarray
    q: Optional[Callable[[float], np.ndarray]] = None
    g: Optional[Callable[[float], np.ndarray]] = None
    # optional vectorized evaluators: q_array(ts) -> (n, s, s), g_array(ts) -> (n, s)
    q_array: Optional[Callable[[np.ndarray], np.ndarray]] = None
    g_array: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"LinearSystem: alpha must lie in (0, 1), got {self.alpha}")
        self.a_matrix = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        if self.a_matrix.shape[0] != self.a_matrix.shape[1]:
            raise DomainError("LinearSystem: A must be square")

    @property
    def dimension(self) -> int:
        return self.a_matrix.shape[0]

    def q_at(self, t: float) -> np.ndarray:
        if self.q is None:
            return np.zeros((self.dimension, self.dimension))
        return np.atleast_2d(np.asarray(self.q(t), dtype=float))

    def g_at(self, t: float) -> np.ndarray:
        if self.g is None:
            return np.zeros(self.dimension)
        return np.atleast_1d(np.asarray(self.g(t), dtype=float))

    def q_batch(self, ts: np.ndarray) -> np.ndarray:
        if self.q_array is not None:
            return np.asarray(self.q_array(ts), dtype=float)
        return np.stack([self.q_at(t) for t in ts])

    def g_batch(self, ts: np.ndarray) -> np.ndarray:
        if self.g_array is not None:
            return np.asarray(self.g_array(ts), dtype=float)
        return np.stack([self.g_at(t) for t in ts])

    def as_ivp(self, x0) -> IVProblem:
        """The same system packaged for the generic nonlinear solver."""

        def rhs(t, x):
            out = self.a_matrix @ x
            if self.q is not None:
                out = out + self.q_at(t) @ x
            if self.g is not None:
                out = out + self.g_at(t)
            return out

        lip = float(np.linalg.norm(self.a_matrix, 2))
        if self.q is not None:
            lip_fn = lambda t: lip + float(np.linalg.norm(self.q_at(t), 2))  # noqa: E731
            return IVProblem(self.alpha, rhs, x0, lipschitz=lip_fn)
        return IVProblem(self.alpha, rhs, x0, lipschitz=lip)


@dataclass(eq=False)
class WeightedTrajectory:
    """Solution samples in the weighted variable y(t) = t**(1-alpha) x(t)."""

    mesh: GradedMesh
    alpha: float
    y: np.ndarray
    defects: np.ndarray = field(default=None, repr=False)

    def x_values(self) -> np.ndarray:
        """Samples of x itself; the t = 0 row is NaN (x is singular there)."""
        t = self.mesh.nodes
        x = np.empty_like(self.y)
        x[0] = np.nan
        x[1:] = t[1:, None] ** (self.alpha - 1.0) * self.y[1:]
        return x

    def x_norms(self) -> np.ndarray:
        x = self.x_values()
        return np.linalg.norm(x, axis=1)


@dataclass(frozen=True)
class BieleckiNorm:
    """Exponentially weighted sup norm sup_t t**(1-alpha)||x(t)|| e^(-gamma t)."""

    gamma: float
    horizon: float

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise DomainError(f"BieleckiNorm: gamma must be positive, got {self.gamma}")


def bielecki_norm(traj: WeightedTrajectory, nrm: BieleckiNorm) -> float:
    t = traj.mesh.nodes
    mask = t <= nrm.horizon * (1.0 + 1e-12)
    vals = np.linalg.norm(traj.y[mask], axis=1) * np.exp(-nrm.gamma * t[mask])
    return float(vals.max())


def weighted_sup_norm(traj: WeightedTrajectory) -> float:
    return float(np.linalg.norm(traj.y, axis=1).max())


def _weighted_rhs(problem: IVProblem) -> Callable[[float, np.ndarray], np.ndarray]:
    alpha = problem.alpha
    rhs = problem.rhs

    def fw(t: float, y: np.ndarray) -> np.ndarray:
        x = t ** (alpha - 1.0) * y
        return t ** (1.0 - alpha) * np.asarray(rhs(t, x), dtype=float)

    return fw


def _node0_value(fw, t1: float, y0: np.ndarray) -> Optional[np.ndarray]:
    """Limit of F(t, y0) as t -> 0+, probed numerically.

    Returns None when no finite limit is detected (non-Lipschitz right
    sides); the caller then lumps the first-node mass onto node 1, which
    perturbs the scheme only at the size of the first panel.
    """
    try:
        f1 = fw(t1 * 1e-4, y0)
        f2 = fw(t1 * 1e-8, y0)
    except (ArithmeticError, ValueError):
        return None
    if not (np.all(np.isfinite(f1)) and np.all(np.isfinite(f2))):
        return None
    scale = 1.0 + float(np.linalg.norm(f2))
    if float(np.linalg.norm(f2 - f1)) > 1e-6 * scale:
        return None
    if float(np.linalg.norm(f2)) > 1e6 * (1.0 + float(np.linalg.norm(y0))):
        return None
    return np.asarray(f2, dtype=float)


def solve_ivp(
    problem: IVProblem,
    mesh: GradedMesh,
    tol: float = 1e-8,
    max_inner: int = 50,
) -> WeightedTrajectory:
    """March the discretized integral equation node by node.

    Each step is an implicit equation for y(t_j) solved by fixed-point
    iteration, warm-started from the previous node, with damping 0.5
    whenever the contraction ratio exceeds 0.9.  The returned trajectory
    satisfies the discrete equation with defect <= tol at every node.
    """
    if not tol > 0.0:
        raise DomainError(f"solve_ivp: tol must be positive, got {tol}")
    alpha = problem.alpha
    t = mesh.nodes
    n = mesh.node_count
    s = problem.dimension
    w2 = weights_double(alpha, mesh).w
    fw = _weighted_rhs(problem)
    galpha = math.gamma(alpha)

    y = np.zeros((n + 1, s))
    fvals = np.zeros((n + 1, s))
    defects = np.zeros(n + 1)
    y[0] = problem.x0
    f0 = _node0_value(fw, t[1], y[0])
    use_f0 = f0 is not None
    if use_f0:
        fvals[0] = f0

    for j in range(1, n + 1):
        cj = t[j] ** (1.0 - alpha) / galpha
        wr = w2[j]
        if use_f0:
            hist = wr[:j] @ fvals[:j]
            diag = wr[j]
        elif j == 1:
            hist = np.zeros(s)
            diag = wr[0] + wr[1]
        else:
            hist = wr[1:j] @ fvals[1:j] + wr[0] * fvals[1]
            diag = wr[j]
        base = y[0] + cj * hist
        cdiag = cj * diag

        yj = y[j - 1].copy()
        theta = 1.0
        prev = math.inf
        converged = False
        for _ in range(max_inner):
            fj = fw(t[j], yj)
            target = base + cdiag * fj
            if not np.all(np.isfinite(target)):
                # step overshot into non-finite territory: back off hard
                yj = y[j - 1].copy()
                theta *= 0.25
                prev = math.inf
                if theta < 1e-12:
                    break
                continue
            delta = target - yj
            nd = float(np.linalg.norm(delta))
            if nd <= 0.5 * tol:
                yj = target
                fj = fw(t[j], yj)
                defect = float(np.linalg.norm(base + cdiag * fj - yj))
                if defect <= tol:
                    fvals[j] = fj
                    defects[j] = defect
                    converged = True
                    break
                prev = nd if nd > 0 else prev
                continue
            # halve the damping every time the iteration stops contracting
            # (repeatedly, so locally stiff right sides still converge)
            if nd > 0.9 * prev:
                theta = max(theta * 0.5, 1e-8)
            elif nd < 0.3 * prev and theta < 1.0:
                theta = min(1.0, theta * 2.0)
            yj = yj + theta * delta
            prev = nd
        if not converged:
            raise ConvergenceError(
                f"solve_ivp: inner iteration did not contract at node {j} "
                f"(t = {t[j]:.6g}, defect {prev:.3e})",
                node_index=j,
                last_defect=prev,
            )
        y[j] = yj
    return WeightedTrajectory(mesh, alpha, y, defects)


class ResolventEvaluator:
    """Batch evaluation of E(alpha, alpha; dt**alpha * A) and its norms.

    Diagonalizes A once when the eigenvector basis is well conditioned;
    alpha = 1/2 additionally gets a vectorized Faddeeva fast path.
    """

    def __init__(self, alpha: float, a_matrix: np.ndarray, norm_ord=2):
        self.alpha = float(alpha)
        self.a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
        self.s = self.a.shape[0]
        self.norm_ord = norm_ord
        self.idx = MLIndex(self.alpha, self.alpha)
        self._eig = None
        if self.s > 1:
            try:
                w, v = np.linalg.eig(self.a)
                if np.isfinite(np.linalg.cond(v)) and np.linalg.cond(v) < 1e6:
                    self._eig = (w, v, np.linalg.inv(v))
            except np.linalg.LinAlgError:
                self._eig = None

    def _scalar_values(self, lam: complex, dt: np.ndarray) -> np.ndarray:
        z = lam * dt**self.alpha
        if self.alpha == 0.5:
            w = wofz(-1j * z)
            return 1.0 / _SQRT_PI + z * w
        return np.array([ml_scalar(self.idx, zz) for zz in z])

    def scalar_values(self, dt: np.ndarray) -> np.ndarray:
        """Resolvent values for a 1x1 system, as a real vector."""
        if self.s != 1:
            raise DomainError("scalar_values requires a 1x1 system matrix")
        return self._scalar_values(complex(self.a[0, 0]), np.asarray(dt, dtype=float)).real

    def matrices(self, dt: np.ndarray) -> np.ndarray:
        """E(alpha, alpha; dt_k**alpha * A) for every entry of dt, shape (n, s, s)."""
        dt = np.asarray(dt, dtype=float)
        if self.s == 1:
            vals = self._scalar_values(complex(self.a[0, 0]), dt)
            return vals.real.reshape(-1, 1, 1)
        if self._eig is not None:
            w, v, vinv = self._eig
            cols = np.stack([self._scalar_values(lami, dt) for lami in w], axis=1)
            out = np.einsum("ij,nj,jk->nik", v, cols, vinv)
            return out.real
        return np.stack([ml_matrix(self.idx, (d**self.alpha) * self.a) for d in dt])

    def norms(self, dt: np.ndarray) -> np.ndarray:
        mats = self.matrices(dt)
        if self.s == 1:
            return np.abs(mats[:, 0, 0])
        return np.array([np.linalg.norm(m, self.norm_ord) for m in mats])


def _symmetric_nodes(length: float, n: int, grading: float) -> np.ndarray:
    """Mesh on [0, length] graded toward both endpoints."""
    n = max(4, n + (n % 2))
    k = 2.0 * np.arange(n // 2 + 1) / n
    left = 0.5 * length * k**grading
    right = length - left[::-1]
    return np.concatenate([left[:-1], right])


def solve_linear_voc(
    system: LinearSystem,
    x0,
    mesh: GradedMesh,
    tol: float = 1e-8,
    max_inner: int = 50,
) -> WeightedTrajectory:
    """Solve the linear system through its resolvent-kernel representation

        x(t) = Gamma(alpha) t**(alpha-1) E(alpha,alpha; t**alpha A) x0
             + integral (t-tau)**(alpha-1) E(alpha,alpha; (t-tau)**alpha A)
                        [Q(tau) x(tau) + g(tau)] dtau.

    Each step integrates in the backward variable u = t - tau on a mesh
    graded toward both ends: u = 0 resolves the kernel cusp of E, u = t
    the t**alpha cusp of the weighted solution.  The Q term uses the
    doubly singular weights (the tau**(alpha-1) factor is the weighted
    solution's own singularity), the g term the single-singular ones.
    The step equation is linear in y(t_j) and solved directly.
    """
    del tol, max_inner  # step equations are solved exactly; kept for symmetry
    alpha = system.alpha
    s = system.dimension
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != s:
        raise InputError(f"solve_linear_voc: x0 has size {x0.size}, expected {s}")
    t = mesh.nodes
    n = mesh.node_count
    ev = ResolventEvaluator(alpha, system.a_matrix)
    galpha = math.gamma(alpha)
    grading = max(2.0, 2.0 / alpha)

    hom = ev.matrices(t) @ x0 * galpha  # y-form homogeneous term
    y = np.zeros((n + 1, s))
    defects = np.zeros(n + 1)
    y[0] = x0
    eye = np.eye(s)
    has_q = system.q is not None or system.q_array is not None
    has_g = system.g is not None or system.g_array is not None
    scalar = s == 1

    for j in range(1, n + 1):
        tj = t[j]
        u = _symmetric_nodes(tj, min(2 * j, max(8, n)), grading)
        tau = tj - u
        tau[-1] = 0.0
        pref = tj ** (1.0 - alpha)
        if scalar:
            evals = ev.scalar_values(u)
        else:
            emats = ev.matrices(u)

        acc = hom[j].copy()
        cmat = None
        if has_g:
            wg = double_conv_row(u, tj, 1.0, alpha)
            gvals = system.g_batch(tau)
            if scalar:
                acc = acc + pref * np.dot(wg * evals, gvals[:, 0])
            else:
                acc = acc + pref * np.einsum("k,kab,kb->a", wg, emats, gvals)
        if has_q:
            wq = double_conv_row(u, tj, alpha, alpha)
            qvals = system.q_batch(tau)
            if scalar:
                mk = (wq * evals * qvals[:, 0, 0])[:, None, None]
            else:
                mk = wq[:, None, None] * np.einsum("kab,kbc->kac", emats, qvals)
            # y(tau) interpolated on committed nodes; the slice with
            # tau > t_{j-1} depends linearly on the unknown y_j
            unk = tau > t[j - 1]
            if np.any(~unk):
                yfix = np.stack(
                    [np.interp(tau[~unk], t[: j + 1], y[: j + 1, c]) for c in range(s)],
                    axis=1,
                )
                if scalar:
                    acc = acc + pref * np.dot(mk[~unk, 0, 0], yfix[:, 0])
                else:
                    acc = acc + pref * np.einsum("kab,kb->a", mk[~unk], yfix)
            if np.any(unk):
                theta = (tau[unk] - t[j - 1]) / (tj - t[j - 1])
                m_unk = mk[unk]
                if scalar:
                    acc = acc + pref * np.dot(m_unk[:, 0, 0], (1.0 - theta)) * y[j - 1]
                    cmat = pref * np.dot(m_unk[:, 0, 0], theta) * eye
                else:
                    acc = acc + pref * np.einsum(
                        "kab,kb->a", m_unk, np.outer(1.0 - theta, y[j - 1])
                    )
                    cmat = pref * np.einsum("k,kab->ab", theta, m_unk)
        if cmat is None:
            y[j] = acc
        else:
            try:
                y[j] = np.linalg.solve(eye - cmat, acc)
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(
                    f"solve_linear_voc: singular step equation at node {j}",
                    node_index=j,
                ) from exc
        defects[j] = 0.0
    return WeightedTrajectory(mesh, alpha, y, defects)


@dataclass
class PicardReport:
    """Successive Bielecki distances of the Picard iteration and the
    theoretical contraction factor they are measured against."""

    gamma: float
    bound: float
    distances: list
    ratios: list
    iterations: int


def picard_diagnostics(
    problem: IVProblem,
    mesh: GradedMesh,
    gamma: float,
    n_iters: int = 20,
) -> PicardReport:
    """Iterate the integral operator from the seed x0 * t**(alpha-1) and
    record the Bielecki-norm distances d_k of successive iterates.

    The ratios d_{k+1}/d_k must stay below the contraction factor
    L * 2**(2-alpha) / gamma**alpha (within discretization error);
    three consecutive ratios above 1 while that factor is below 1 raise
    :class:`InvariantViolation`.
    """
    if problem.lipschitz is None:
        raise InputError("picard_diagnostics: the problem must carry a Lipschitz bound")
    alpha = problem.alpha
    t = mesh.nodes
    if callable(problem.lipschitz):
        lip = max(float(problem.lipschitz(tk)) for tk in t)
    else:
        lip = float(problem.lipschitz)
    bound = lip * 2.0 ** (2.0 - alpha) / gamma**alpha

    n = mesh.node_count
    s = problem.dimension
    w2 = weights_double(alpha, mesh).w
    fw = _weighted_rhs(problem)
    galpha = math.gamma(alpha)
    cj = t[1:] ** (1.0 - alpha) / galpha

    f0 = _node0_value(fw, t[1], problem.x0)
    use_f0 = f0 is not None

    def apply_op(ycur: np.ndarray) -> np.ndarray:
        fvals = np.zeros((n + 1, s))
        if use_f0:
            fvals[0] = f0
        for k in range(1, n + 1):
            fvals[k] = fw(t[k], ycur[k])
        if not use_f0:
            fvals[0] = fvals[1]
        out = np.empty_like(ycur)
        out[0] = problem.x0
        out[1:] = problem.x0 + cj[:, None] * (w2[1:, :] @ fvals)
        return out

    weight = np.exp(-gamma * t)
    ycur = np.tile(problem.x0, (n + 1, 1)).astype(float)
    distances = []
    ratios = []
    floor = 1e-14
    bad_streak = 0
    iterations = 0
    for _ in range(n_iters):
        ynext = apply_op(ycur)
        d = float((np.linalg.norm(ynext - ycur, axis=1) * weight).max())
        iterations += 1
        if distances and distances[-1] > floor:
            ratio = d / distances[-1]
            ratios.append(ratio)
            if ratio > 1.0 and bound < 1.0:
                bad_streak += 1
                if bad_streak >= 3:
                    raise InvariantViolation(
                        f"picard_diagnostics: {bad_streak} consecutive expanding "
                        f"iterations although the contraction factor is {bound:.3f}"
                    )
            else:
                bad_streak = 0
        distances.append(d)
        ycur = ynext
        floor = max(1e-14, 1e-14 * float(np.abs(ycur).max()))
        if d <= floor:
            break
    return PicardReport(gamma, bound, distances, ratios, iterations)
