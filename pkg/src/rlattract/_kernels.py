"""Numba-compiled product-integration kernels.

Loop implementations of the routines in :mod:`rlattract._kernels_np`,
compiled with ``@njit``.  Selected by default; set ``RLATTRACT_NO_NUMBA=1``
to force the pure-numpy fallback.  The two backends agree to rounding
(see tests/test_kernels_parity.py) and ``benchmarks/bench_kernels.py``
compares their speed.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

BACKEND = "numba"

_RATIO_MAX = 2.0


@njit(cache=True)
def _pd(lo, hi, e):
    # hi**e - lo**e, stable for hi - lo << lo
    if lo <= 0.0:
        return hi**e
    return lo**e * math.expm1(e * math.log1p((hi - lo) / lo))


@njit(cache=True)
def single_row(nodes, t, beta):
    m = nodes.size - 1
    w = np.zeros(m + 1)
    for k in range(m):
        a = nodes[k]
        b = nodes[k + 1]
        h = b - a
        ua = t - a
        ub = t - b
        m0 = _pd(ub, ua, beta) / beta
        m1 = ua * m0 - _pd(ub, ua, beta + 1.0) / (beta + 1.0)
        wr = m1 / h
        w[k] += m0 - wr
        w[k + 1] += wr
    for k in range(m + 1):
        if w[k] < 0.0:
            w[k] = 0.0
    return w


@njit(cache=True)
def single_table(nodes, beta):
    n = nodes.size - 1
    w = np.zeros((n + 1, n + 1))
    for j in range(1, n + 1):
        w[j, : j + 1] = single_row(nodes[: j + 1], nodes[j], beta)
    return w


@njit(cache=True)
def _gauss_panel(w, t, a, b, plo, phi, base_lo, base_hi, k, legx, legw):
    half = 0.5 * (phi - plo)
    mid = 0.5 * (plo + phi)
    inv = 1.0 / (base_hi - base_lo)
    cl = 0.0
    cr = 0.0
    for i in range(legx.size):
        tau = mid + half * legx[i]
        kern = (t - tau) ** (a - 1.0) * tau ** (b - 1.0)
        hr = (tau - base_lo) * inv
        cr += legw[i] * kern * hr
        cl += legw[i] * kern * (1.0 - hr)
    w[k] += half * cl
    w[k + 1] += half * cr


@njit(cache=True)
def _right_split_gauss(w, t, a, b, p, q, base_lo, base_hi, k, legx, legw):
    # assumes tau-variation across [p, q] is already mild; halves the
    # distance to the right singularity until (t-tau) varies mildly too
    while (t - p) > _RATIO_MAX * (t - q):
        e = t - 0.5 * (t - p)
        _gauss_panel(w, t, a, b, p, e, base_lo, base_hi, k, legx, legw)
        p = e
    _gauss_panel(w, t, a, b, p, q, base_lo, base_hi, k, legx, legw)


@njit(cache=True)
def double_row(nodes, t, a, b, va, la, vb, lb, legx, legw, bab):
    m = nodes.size - 1
    w = np.zeros(m + 1)
    if m == 1:
        h = nodes[1]
        scale = h ** (a + b - 1.0)
        w[0] = scale * bab * a / (a + b)
        w[1] = scale * bab * b / (a + b)
        return w
    # first panel [0, t1]
    t1 = nodes[1]
    acc0 = 0.0
    acc1 = 0.0
    for i in range(vb.size):
        tau = t1 * vb[i]
        s = (t - tau) ** (a - 1.0)
        acc0 += lb[i] * s * (1.0 - vb[i])
        acc1 += lb[i] * s * vb[i]
    w[0] += t1**b * acc0
    w[1] += t1**b * acc1
    # Last panel [t_{m-1}, t]: the Jacobi rule absorbs (t - tau)**(a-1),
    # but on a strongly graded mesh the tau**(b-1) factor still varies too
    # fast across this panel for small rows, so split off mildly varying
    # Legendre sub-panels until the Jacobi piece starts at tau >= t/2.
    lo = nodes[m - 1]
    p = lo
    while t > _RATIO_MAX * p:
        q = min(2.0 * p, 0.5 * t)
        if q <= p:
            break
        _gauss_panel(w, t, a, b, p, q, lo, t, m - 1, legx, legw)
        p = q
    h = t - p
    accm = 0.0
    accm1 = 0.0
    inv = 1.0 / (t - lo)
    for i in range(va.size):
        tau = t - h * va[i]
        s = tau ** (b - 1.0)
        hr = (tau - lo) * inv
        accm += la[i] * s * hr
        accm1 += la[i] * s * (1.0 - hr)
    w[m] += h**a * accm
    w[m - 1] += h**a * accm1
    # interior panels, geometrically subdivided until both kernel factors
    # vary mildly (node ratio <= 2 from either endpoint singularity)
    for k in range(1, m - 1):
        lo = nodes[k]
        hi = nodes[k + 1]
        if hi <= _RATIO_MAX * lo:
            _right_split_gauss(w, t, a, b, lo, hi, lo, hi, k, legx, legw)
        else:
            nsub = int(math.ceil(math.log(hi / lo) / math.log(_RATIO_MAX)))
            ratio = (hi / lo) ** (1.0 / nsub)
            p = lo
            for _ in range(nsub - 1):
                q = p * ratio
                _right_split_gauss(w, t, a, b, p, q, lo, hi, k, legx, legw)
                p = q
            _right_split_gauss(w, t, a, b, p, hi, lo, hi, k, legx, legw)
    for k in range(m + 1):
        if w[k] < 0.0:
            w[k] = 0.0
    return w


@njit(cache=True)
def double_table(nodes, a, b, va, la, vb, lb, legx, legw, bab):
    n = nodes.size - 1
    w = np.zeros((n + 1, n + 1))
    for j in range(1, n + 1):
        w[j, : j + 1] = double_row(
            nodes[: j + 1], nodes[j], a, b, va, la, vb, lb, legx, legw, bab
        )
    return w
