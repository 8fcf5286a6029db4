"""Numerical attractivity certification for linear fractional systems.

For ``D^alpha x = A x + Q(t) x + g(t)`` the certificate checks, in order:

1. the spectrum of A lies in the stability sector |arg(lambda)| > alpha*pi/2,
2. the contraction constant

       q = sup_t  t**(1-alpha) * integral_0^t (t-tau)**(alpha-1)
               |||E(alpha,alpha; (t-tau)**alpha A) Q(tau)||| tau**(alpha-1) dtau

   is below 1 and the forcing integral is finite (first sufficient
   condition), otherwise
3. |||Q(t)||| decays to zero (second sufficient condition, with the
   constants K and T of its contraction argument).

Suprema over t >= 0 are discretized as geometric scans with a
stabilization check under doubling of the horizon; certificates report
scan evidence, never proof.  All convolution scans substitute
u = t - tau so the kernel cusp of E sits at u = 0 where the inner mesh
is graded.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .quadrature import build_mesh, double_conv_row
from .solver import LinearSystem, ResolventEvaluator

__all__ = [
    "ScanGrid",
    "SectorReport",
    "ScanResult",
    "TailBound",
    "DecayReport",
    "AttractivityCertificate",
    "sector_check",
    "kernel_tail_bound",
    "kernel_double_conv_sup",
    "contraction_q",
    "corollary_threshold",
    "g_forcing_bound",
    "decay_check",
    "certify",
    "qin_probe",
]

VERDICT_THM2 = "certified_thm2"
VERDICT_THM3 = "certified_thm3"
VERDICT_NONE = "not_certified"

_DECAY_EXTENSION_CAP = 1e6  # max factor by which decay_check extends t_max


@dataclass(frozen=True)
class ScanGrid:
    """Geometric t-grid for discretizing sup_{t >= 0} plus the inner
    quadrature resolution used at each scan point."""

    t_min: float = 1e-2
    t_max: float = 1e4
    per_decade: int = 20
    inner_n: int = 1024

    def __post_init__(self):
        if not self.t_min > 0.0:
            raise DomainError(f"ScanGrid: t_min must be positive, got {self.t_min}")
        if not self.t_max / self.t_min >= 100.0:
            raise DomainError("ScanGrid: t_max must be at least 100 * t_min")
        if self.per_decade < 2 or self.inner_n < 16:
            raise DomainError("ScanGrid: resolution too low")

    def points(self, t_max: Optional[float] = None) -> np.ndarray:
        hi = self.t_max if t_max is None else t_max
        n = int(round(math.log10(hi / self.t_min) * self.per_decade)) + 1
        return np.geomspace(self.t_min, hi, n)


@dataclass(frozen=True)
class SectorReport:
    """Spectrum location relative to the sector |arg| > alpha*pi/2.

    ``margin`` is the worst eigenvalue clearance in radians (negative
    when violated; a zero eigenvalue reports -alpha*pi/2).
    """

    in_sector: bool
    margin: float
    eigenvalues: tuple


@dataclass
class ScanResult:
    """Scan maximum of a weighted convolution, with stabilization data."""

    sup: float
    stabilized: bool
    not_bounded: bool
    arg_t: float
    samples: np.ndarray = field(repr=False)  # columns: t, value


@dataclass
class TailBound:
    """Scan estimate of the kernel tail constant M with
    ||t**(alpha-1) E(alpha,alpha; t**alpha A)||| <= M / t**(alpha+1) for
    t >= t0."""

    m: float
    t0: float
    attained_at: float
    tail_rising: bool
    samples: np.ndarray = field(repr=False)


@dataclass
class DecayReport:
    decay_verified: bool
    k_const: float
    t_const: float
    q_sup_norm: float
    samples: np.ndarray = field(repr=False)


def _threads() -> int:
    env = os.environ.get("RLATTRACT_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return min(8, os.cpu_count() or 1)


def _scan_map(fn, pts):
    nt = _threads()
    if nt <= 1 or len(pts) < 8:
        return [fn(t) for t in pts]
    with ThreadPoolExecutor(max_workers=nt) as pool:
        return list(pool.map(fn, pts))


def sector_check(a_matrix, alpha: float) -> SectorReport:
    """Locate the spectrum of A relative to the sector |arg| > alpha*pi/2."""
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise DomainError("sector_check: matrix must be square")
    try:
        eig = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"sector_check: eigenvalue computation failed: {exc}") from exc
    half_sector = alpha * math.pi / 2.0
    scale = float(np.abs(eig).max(initial=0.0))
    margin = math.inf
    zero_found = False
    for lam in eig:
        if abs(lam) <= 1e-12 * max(scale, 1.0):
            zero_found = True
            continue
        margin = min(margin, abs(np.angle(lam)) - half_sector)
    if zero_found:
        margin = -half_sector
    in_sector = bool((not zero_found) and margin > 0.0)
    return SectorReport(in_sector, float(margin), tuple(complex(v) for v in eig))


def _conv_point(t, ev, alpha, inner_n, grading, psi_builder, left_exp):
    """t**(1-alpha) * integral_0^t u**(left_exp - 1) (t-u)**(alpha-1) psi(u) du
    by product integration with Richardson extrapolation in the mesh size."""
    vals = []
    for n in (inner_n // 2, inner_n):
        u = build_mesh(t, n, grading).nodes
        row = double_conv_row(u, t, left_exp, alpha) if left_exp != alpha else None
        if row is None:
            row = double_conv_row(u, t, alpha, alpha)
        psi = psi_builder(u, t)
        vals.append(float(row @ psi))
    v = (4.0 * vals[1] - vals[0]) / 3.0
    return t ** (1.0 - alpha) * v


def _stabilized_scan(grid: ScanGrid, value_at) -> ScanResult:
    """Scan up to 2*t_max; the sup is taken over t <= t_max and compared
    with the final decade of the doubled scan."""
    pts = grid.points(2.0 * grid.t_max)
    vals = np.array(_scan_map(value_at, pts))
    core = pts <= grid.t_max * (1.0 + 1e-9)
    sup = float(vals[core].max())
    arg_t = float(pts[core][int(np.argmax(vals[core]))])
    tail = pts >= 0.2 * grid.t_max
    tail_max = float(vals[tail].max())
    denom = max(abs(sup), 1e-300)
    stabilized = abs(tail_max - sup) < 0.01 * denom
    last_decade = pts >= 0.2 * (2.0 * grid.t_max)
    lv = vals[last_decade]
    not_bounded = lv.size >= 2 and (lv[-1] - lv[0]) > 0.01 * denom
    return ScanResult(sup, stabilized, not_bounded, arg_t, np.column_stack([pts, vals]))


def kernel_double_conv_sup(a_matrix, alpha: float, grid: ScanGrid, norm_ord=2) -> ScanResult:
    """Scan of G(t) = t**(1-alpha) * integral of the doubly weighted
    resolvent norm; bounded for sector matrices."""
    _require_sector(a_matrix, alpha)
    ev = ResolventEvaluator(alpha, a_matrix, norm_ord)
    grading = max(2.0, 2.0 / alpha)

    def value_at(t):
        return _conv_point(t, ev, alpha, grid.inner_n, grading,
                           lambda u, _t: ev.norms(u), alpha)

    return _stabilized_scan(grid, value_at)


def contraction_q(system: LinearSystem, grid: ScanGrid, norm_ord=2) -> ScanResult:
    """Scan of the contraction constant q (taken with the tau**(alpha-1)
    weight of the underlying fixed-point estimate)."""
    _require_sector(system.a_matrix, system.alpha)
    if system.q is None:
        pts = grid.points(2.0 * grid.t_max)
        return ScanResult(0.0, True, False, float(pts[0]),
                          np.column_stack([pts, np.zeros_like(pts)]))
    alpha = system.alpha
    ev = ResolventEvaluator(alpha, system.a_matrix, norm_ord)
    grading = max(2.0, 2.0 / alpha)
    s = system.dimension

    def psi(u, t):
        mats = ev.matrices(u)
        qvals = system.q_batch(np.maximum(t - u, 0.0))
        if s == 1:
            return np.abs(mats[:, 0, 0] * qvals[:, 0, 0])
        prods = np.einsum("kab,kbc->kac", mats, qvals)
        return np.array([np.linalg.norm(m, norm_ord) for m in prods])

    def value_at(t):
        return _conv_point(t, ev, alpha, grid.inner_n, grading, psi, alpha)

    return _stabilized_scan(grid, value_at)


def corollary_threshold(a_matrix, alpha: float, grid: ScanGrid, norm_ord=2) -> float:
    """Norm bound on a constant Q guaranteeing q < 1 (reciprocal of the
    weighted convolution sup, consistent with contraction_q)."""
    g = kernel_double_conv_sup(a_matrix, alpha, grid, norm_ord)
    return 1.0 / g.sup


def g_forcing_bound(system: LinearSystem, grid: ScanGrid, norm_ord=2) -> ScanResult:
    """Scan of t**(1-alpha) * integral (t-tau)**(alpha-1)
    ||E(...) g(tau)|| dtau, the forcing-boundedness condition."""
    _require_sector(system.a_matrix, system.alpha)
    alpha = system.alpha
    if system.g is None:
        pts = grid.points(2.0 * grid.t_max)
        return ScanResult(0.0, True, False, float(pts[0]),
                          np.column_stack([pts, np.zeros_like(pts)]))
    ev = ResolventEvaluator(alpha, system.a_matrix, norm_ord)
    grading = max(2.0, 2.0 / alpha)

    def psi(u, t):
        mats = ev.matrices(u)
        gv = system.g_batch(np.maximum(t - u, 0.0))
        return np.linalg.norm(np.einsum("kab,kb->ka", mats, gv), axis=1)

    def value_at(t):
        # kernel u**(alpha-1) only: the (t-u) exponent is 1
        return _conv_point(t, ev, alpha, grid.inner_n, grading, psi, 1.0)

    return _stabilized_scan(grid, value_at)


def kernel_tail_bound(a_matrix, alpha: float, t0: float, grid: ScanGrid, norm_ord=2) -> TailBound:
    """Scan of m(t) = t**(alpha+1) * |||t**(alpha-1) E(alpha,alpha;
    t**alpha A)||| for t >= t0; its sup is the tail constant M.

    For sector matrices m(t) typically increases monotonically to a
    finite limit, so the sup legitimately sits at the scan horizon;
    ``tail_rising`` flags the pathological case where m is still growing
    materially across the final decade (no finite tail constant).
    """
    if not t0 > 0.0:
        raise DomainError(f"kernel_tail_bound: t0 must be positive, got {t0}")
    _require_sector(a_matrix, alpha)
    ev = ResolventEvaluator(alpha, a_matrix, norm_ord)
    pts = grid.points()
    pts = np.unique(np.concatenate([[t0], pts[pts > t0]]))
    norms = ev.norms(pts)
    m_vals = pts ** (alpha + 1.0) * pts ** (alpha - 1.0) * norms
    i = int(np.argmax(m_vals))
    m = float(m_vals[i])
    tail = pts >= pts[-1] / 10.0
    tv = m_vals[tail]
    tail_rising = tv.size >= 2 and (tv[-1] - tv[0]) > 0.01 * max(m, 1e-300)
    return TailBound(m, float(t0), float(pts[i]), bool(tail_rising),
                     np.column_stack([pts, m_vals]))


def decay_check(
    system: LinearSystem,
    grid: ScanGrid,
    g_sup: Optional[float] = None,
    norm_ord=2,
) -> DecayReport:
    """Check |||Q(t)||| -> 0 on an (auto-extended) geometric grid and
    compute the constants of the decay-based contraction argument.

    decay_verified requires the final-decade sup of |||Q||| to fall below
    one tenth of the first-decade sup and below 1e-3 * (1 + sup |||Q|||).
    K dominates both sup|||E||| * sup|||Q||| and four times the weighted
    convolution sup; T is the first grid point beyond which
    |||Q(t)||| <= 1/K throughout the scan.
    """
    _require_sector(system.a_matrix, system.alpha)
    alpha = system.alpha
    if g_sup is None:
        g_sup = kernel_double_conv_sup(system.a_matrix, alpha, grid, norm_ord).sup
    ev = ResolventEvaluator(alpha, system.a_matrix, norm_ord)

    def q_norm(t):
        return float(np.linalg.norm(system.q_at(t), norm_ord))

    sup_e = float(max(ev.norms(np.concatenate([[0.0], grid.points()])).max(), 0.0))

    ext = grid.t_max
    verified = False
    pts = grid.points(ext)
    qn = np.array([q_norm(t) for t in pts])
    while True:
        first = qn[pts <= 10.0 * grid.t_min]
        last = qn[pts >= ext / 10.0]
        sup_q = float(qn.max())
        tail_sup = float(last.max())
        verified = (
            tail_sup < 0.1 * float(first.max()) and tail_sup < 1e-3 * (1.0 + sup_q)
        )
        k_const = max(sup_e * sup_q, 4.0 * g_sup)
        thresh = 1.0 / k_const if k_const > 0 else math.inf
        below = qn <= thresh
        t_const = math.nan
        for i in range(len(pts)):
            if below[i:].all():
                t_const = float(pts[i])
                break
        if (verified and not math.isnan(t_const)) or ext >= grid.t_max * _DECAY_EXTENSION_CAP:
            break
        ext *= 10.0
        pts = grid.points(ext)
        qn = np.array([q_norm(t) for t in pts])
    return DecayReport(bool(verified), float(k_const), t_const, sup_q,
                       np.column_stack([pts, qn]))


def _require_sector(a_matrix, alpha):
    rep = sector_check(a_matrix, alpha)
    if not rep.in_sector:
        raise DomainError(
            "kernel scan requires the spectrum inside the stability sector "
            f"(margin {rep.margin:.4f} rad)"
        )


def qin_probe(a_matrix, alpha: float, eps_grid: Optional[np.ndarray] = None) -> np.ndarray:
    """Resolvent-kernel norm on a grid of small times, next to its
    leading term t**(alpha-1)/Gamma(alpha), demonstrating the blow-up at
    t -> 0+ (no bound M e^(-gamma t) can hold there).

    Returns columns (t, kernel_norm, predicted_leading_term).
    """
    if eps_grid is None:
        eps_grid = np.geomspace(1e-6, 1.0, 25)
    ev = ResolventEvaluator(alpha, a_matrix)
    t = np.asarray(eps_grid, dtype=float)
    norms = t ** (alpha - 1.0) * ev.norms(t)
    predicted = t ** (alpha - 1.0) / math.gamma(alpha)
    return np.column_stack([t, norms, predicted])


@dataclass
class AttractivityCertificate:
    """Everything the certification pipeline computed, plus the verdict."""

    verdict: str
    sector: SectorReport
    q: Optional[float]
    q_threshold: Optional[float]
    g_sup: Optional[float]
    lemma_m: Optional[TailBound]
    g_bound: Optional[float]
    theorem3: Optional[DecayReport]
    scan: ScanGrid
    stabilized: bool
    notes: list
    q_scan: Optional[ScanResult] = field(default=None, repr=False)
    g_scan: Optional[ScanResult] = field(default=None, repr=False)
    conv_scan: Optional[ScanResult] = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        def _round(x):
            if x is None:
                return None
            if isinstance(x, float) and math.isnan(x):
                return None
            return x

        return {
            "verdict": self.verdict,
            "sector": {
                "in_sector": self.sector.in_sector,
                "margin": self.sector.margin,
                "eigenvalues": [[lam.real, lam.imag] for lam in self.sector.eigenvalues],
            },
            "q": _round(self.q),
            "Q_threshold": _round(self.q_threshold),
            "G_sup": _round(self.g_sup),
            "lemma_M": {
                "M": _round(self.lemma_m.m) if self.lemma_m else None,
                "t0": _round(self.lemma_m.t0) if self.lemma_m else None,
            },
            "g_bound": _round(self.g_bound),
            "theorem3": {
                "K": _round(self.theorem3.k_const) if self.theorem3 else None,
                "T": _round(self.theorem3.t_const) if self.theorem3 else None,
                "decay_verified": self.theorem3.decay_verified if self.theorem3 else None,
            },
            "scan": {
                "t_min": self.scan.t_min,
                "t_max": self.scan.t_max,
                "per_decade": self.scan.per_decade,
                "stabilized": self.stabilized,
            },
            "convention_notes": list(self.notes),
        }


_CONVENTION_NOTES = (
    "q computed with the tau**(alpha-1) weight of the fixed-point estimate; "
    "Q_threshold is its reciprocal convolution sup",
    "homogeneous solutions carry the Gamma(alpha) prefactor fixed by the "
    "weighted initial condition lim t**(1-alpha) x(t) = x0",
    "suprema are geometric-scan evidence with a doubling stabilization "
    "check, not a proof",
)


def certify(
    system: LinearSystem,
    grid: ScanGrid = ScanGrid(),
    t0: float = 1.0,
    norm_ord=2,
) -> AttractivityCertificate:
    """Run the full certification pipeline and assemble the certificate.

    Verdicts: 'certified_thm2' (contraction constant q < 1 and bounded,
    stabilized forcing), 'certified_thm3' (decaying Q and stabilized
    forcing), otherwise 'not_certified' with the failing stage named in
    the notes.  A certificate is always returned.
    """
    notes = list(_CONVENTION_NOTES)
    sector = sector_check(system.a_matrix, system.alpha)
    if not sector.in_sector:
        notes.append("failing stage: sector (spectrum not inside |arg| > alpha*pi/2)")
        return AttractivityCertificate(
            VERDICT_NONE, sector, None, None, None, None, None, None,
            grid, False, notes,
        )
    conv = kernel_double_conv_sup(system.a_matrix, system.alpha, grid, norm_ord)
    lemma = kernel_tail_bound(system.a_matrix, system.alpha, t0, grid, norm_ord)
    qres = contraction_q(system, grid, norm_ord)
    gres = g_forcing_bound(system, grid, norm_ord)
    threshold = 1.0 / conv.sup
    stabilized = conv.stabilized and qres.stabilized and gres.stabilized
    if lemma.tail_rising:
        notes.append("warning: kernel tail quantity still rising at the scan horizon")
    if conv.not_bounded:
        notes.append("warning: weighted convolution grows across the final decade")

    theorem3 = None
    if qres.sup < 1.0 and gres.stabilized and not conv.not_bounded:
        verdict = VERDICT_THM2
    else:
        theorem3 = decay_check(system, grid, g_sup=conv.sup, norm_ord=norm_ord)
        if theorem3.decay_verified and gres.stabilized:
            verdict = VERDICT_THM3
        else:
            verdict = VERDICT_NONE
            if qres.sup >= 1.0 and not theorem3.decay_verified:
                notes.append(
                    "failing stage: contraction (q >= 1) and decay "
                    "(|||Q||| does not vanish)"
                )
            elif not gres.stabilized:
                notes.append("failing stage: forcing bound not stabilized")
            else:
                notes.append("failing stage: decay")
    return AttractivityCertificate(
        verdict, sector, float(qres.sup), float(threshold), float(conv.sup),
        lemma, float(gres.sup), theorem3, grid, bool(stabilized), notes,
        q_scan=qres, g_scan=gres, conv_scan=conv,
    )
