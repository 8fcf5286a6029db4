"""Vectorized numpy implementation of the product-integration kernels.

These routines build the weight rows/tables for convolution with the
weakly singular kernels ``(t - tau)**(a-1)`` and
``(t - tau)**(a-1) * tau**(b-1)`` against piecewise-linear data.  The
numba backend in :mod:`rlattract._kernels` implements the identical
contract with explicit loops; ``tests/test_kernels_parity.py`` pins the
two against each other.

Panel treatment for the doubly singular kernel:

* single-panel rows use exact Beta-function moments,
* the first and last panels use Gauss-Jacobi rules that absorb the
  local singular factor exactly,
* interior panels use 8-point Gauss-Legendre, subdivided geometrically
  until the node ratio per sub-panel is at most 2 so the integrand is
  polynomial-resolvable.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"

_RATIO_MAX = 2.0


def _pow_diff(lo, hi, e):
    """hi**e - lo**e for 0 <= lo <= hi, stable when hi - lo << lo."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.empty(np.broadcast(lo, hi).shape)
    lo_b, hi_b = np.broadcast_arrays(lo, hi)
    small = lo_b <= 0.0
    out[small] = hi_b[small] ** e
    ls, hs = lo_b[~small], hi_b[~small]
    out[~small] = ls**e * np.expm1(e * np.log1p((hs - ls) / ls))
    return out


def single_row(nodes, t, beta):
    """Weights w[k] with sum_k w[k] phi(nodes[k]) = integral of
    (t - tau)**(beta-1) times the piecewise-linear interpolant of phi
    over [0, nodes[-1]].  Exact closed-form panel moments."""
    nodes = np.asarray(nodes, dtype=float)
    m = nodes.size - 1
    w = np.zeros(m + 1)
    a = nodes[:-1]
    b = nodes[1:]
    h = b - a
    ua = t - a
    ub = t - b
    m0 = _pow_diff(ub, ua, beta) / beta
    m1 = ua * m0 - _pow_diff(ub, ua, beta + 1.0) / (beta + 1.0)
    w_right = m1 / h
    w_left = m0 - w_right
    w[:-1] += w_left
    w[1:] += w_right
    np.clip(w, 0.0, None, out=w)
    return w


def single_table(nodes, beta):
    """Lower-triangular table of single-kernel rows, row j for t = nodes[j]."""
    n = nodes.size - 1
    w = np.zeros((n + 1, n + 1))
    for j in range(1, n + 1):
        w[j, : j + 1] = single_row(nodes[: j + 1], nodes[j], beta)
    return w


def double_row(nodes, t, a, b, va, la, vb, lb, legx, legw, bab):
    """Weights for the kernel (t - tau)**(a-1) * tau**(b-1) against the
    piecewise-linear interpolant on ``nodes`` (nodes[-1] == t).

    ``va, la`` / ``vb, lb`` are Gauss-Jacobi nodes/weights on (0, 1) for
    the weight functions v**(a-1) / v**(b-1); ``legx, legw`` the
    Gauss-Legendre rule on (-1, 1); ``bab`` the value B(a, b).
    """
    nodes = np.asarray(nodes, dtype=float)
    m = nodes.size - 1
    w = np.zeros(m + 1)
    if m == 1:
        h = nodes[1]
        scale = h ** (a + b - 1.0)
        w[0] = scale * bab * a / (a + b)
        w[1] = scale * bab * b / (a + b)
        return w
    # first panel [0, t1]: Jacobi rule in tau**(b-1)
    t1 = nodes[1]
    tau = t1 * vb
    s = (t - tau) ** (a - 1.0)
    w[0] += t1**b * np.sum(lb * s * (1.0 - vb))
    w[1] += t1**b * np.sum(lb * s * vb)
    # Last panel [t_{m-1}, t]: the Jacobi rule absorbs (t - tau)**(a-1),
    # but on a strongly graded mesh the tau**(b-1) factor still varies too
    # fast across this panel for small rows, so split off mildly varying
    # Legendre sub-panels until the Jacobi piece starts at tau >= t/2.
    lo_last = nodes[m - 1]
    p = lo_last
    inv_last = 1.0 / (t - lo_last)
    while t > _RATIO_MAX * p:
        q = min(2.0 * p, 0.5 * t)
        if q <= p:
            break
        mid = 0.5 * (p + q) + 0.5 * (q - p) * legx
        kern = (t - mid) ** (a - 1.0) * mid ** (b - 1.0)
        hr = (mid - lo_last) * inv_last
        w[m] += 0.5 * (q - p) * np.sum(legw * kern * hr)
        w[m - 1] += 0.5 * (q - p) * np.sum(legw * kern * (1.0 - hr))
        p = q
    h = t - p
    tau = t - h * va
    s = tau ** (b - 1.0)
    hr = (tau - lo_last) * inv_last
    w[m] += h**a * np.sum(la * s * hr)
    w[m - 1] += h**a * np.sum(la * s * (1.0 - hr))
    if m >= 3:
        lo = nodes[1 : m - 1]
        hi = nodes[2:m]
        ks = np.arange(1, m - 1)
        # Sub-panel edges chosen so that both kernel factors vary by at
        # most a factor 2 per sub-panel.  Panels already mild at both
        # ends (the common case) are batched; the rest split geometrically
        # toward whichever singularity is close.
        simple = (hi <= _RATIO_MAX * lo) & ((t - lo) <= _RATIO_MAX * (t - hi))
        plo_l = [lo[simple]]
        phi_l = [hi[simple]]
        kk_l = [ks[simple]]
        bl_l = [lo[simple]]
        bh_l = [hi[simple]]
        for k, pl, ph in zip(ks[~simple], lo[~simple], hi[~simple]):
            if ph > _RATIO_MAX * pl:
                nsub = int(np.ceil(np.log(ph / pl) / np.log(_RATIO_MAX)))
                edges = pl * (ph / pl) ** (np.arange(nsub + 1) / nsub)
            else:
                edges = np.array([pl, ph])
            for p0, q0 in zip(edges[:-1], edges[1:]):
                p = p0
                while (t - p) > _RATIO_MAX * (t - q0):
                    e = t - 0.5 * (t - p)
                    plo_l.append(np.array([p]))
                    phi_l.append(np.array([e]))
                    kk_l.append(np.array([k]))
                    bl_l.append(np.array([pl]))
                    bh_l.append(np.array([ph]))
                    p = e
                plo_l.append(np.array([p]))
                phi_l.append(np.array([q0]))
                kk_l.append(np.array([k]))
                bl_l.append(np.array([pl]))
                bh_l.append(np.array([ph]))
        plo = np.concatenate(plo_l)[:, None]
        phi = np.concatenate(phi_l)[:, None]
        kk = np.concatenate(kk_l).astype(np.intp)
        base_lo = np.concatenate(bl_l)
        base_hi = np.concatenate(bh_l)
        mid = 0.5 * (plo + phi) + 0.5 * (phi - plo) * legx[None, :]
        kern = (t - mid) ** (a - 1.0) * mid ** (b - 1.0)
        hat_r = (mid - base_lo[:, None]) / (base_hi - base_lo)[:, None]
        half = 0.5 * (phi - plo)[:, 0]
        cr = half * np.sum(legw[None, :] * kern * hat_r, axis=1)
        cl = half * np.sum(legw[None, :] * kern * (1.0 - hat_r), axis=1)
        np.add.at(w, kk, cl)
        np.add.at(w, kk + 1, cr)
    np.clip(w, 0.0, None, out=w)
    return w


def double_table(nodes, a, b, va, la, vb, lb, legx, legw, bab):
    n = nodes.size - 1
    w = np.zeros((n + 1, n + 1))
    for j in range(1, n + 1):
        w[j, : j + 1] = double_row(
            nodes[: j + 1], nodes[j], a, b, va, la, vb, lb, legx, legw, bab
        )
    return w
