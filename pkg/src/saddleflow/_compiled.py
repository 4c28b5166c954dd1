"""numba kernels: the primal-dual right-hand side for the builtin problem
families and the Dormand-Prince stepping loop.

The stepping loop is a line-for-line port of ``integrator.solve`` and must be
kept in sync with it. The tableau constants are imported from there.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .integrator import (A21, A31, A32, A41, A42, A43, A51, A52, A53, A54, A61, A62,
                         A63, A64, A65, A71, A73, A74, A75, A76, C2, C3, C4, C5, D1, D3,
                         D4, D5, D6, D7, E1, E3, E4, E5, E6, E7, FAC_MAX, FAC_MIN, SAFETY)

from .problems import KIND_EXAMPLE1, KIND_SMOOTHED_L1

STATUS_DONE = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_PAUSED = 3


@njit(cache=True, inline="always")
def _gradients(kind, z, n, m, fpar, fvec, gvec, gf, gg):
    if kind == KIND_EXAMPLE1:
        s = 0.0
        for i in range(n):
            s += z[i]
        d = 2.0 * s * math.exp(s * s)
        for i in range(n):
            gf[i] = d
        s = 0.0
        for j in range(m):
            s += z[n + j]
        for j in range(m):
            gg[j] = 2.0 * s
    elif kind == KIND_SMOOTHED_L1:
        lam, a = fpar[0], fpar[1]
        for i in range(n):
            gf[i] = lam * math.tanh(0.5 * a * z[i])
        for j in range(m):
            gg[j] = z[n + j] + gvec[j]
    else:
        for i in range(n):
            gf[i] = z[i] - fvec[i]
        for j in range(m):
            gg[j] = z[n + j]


@njit(cache=True, inline="always")
def _rhs(t, z, n, m, K, prm, kind, fpar, fvec, gvec, out, gf, gg, ax, ay):
    alpha, q, p, c, r = prm[0], prm[1], prm[2], prm[3], prm[4]
    tq = t ** q
    damp = alpha / tq
    w = tq / (alpha - 1.0)
    eps = c / t ** p
    beta = t ** r
    ox, oy, ovx, ovy = 0, n, n + m, 2 * n + m
    _gradients(kind, z, n, m, fpar, fvec, gvec, gf, gg)
    for j in range(m):
        ay[j] = z[oy + j] + w * z[ovy + j]
    for i in range(n):
        ax[i] = z[ox + i] + w * z[ovx + i]
    # K^T ay is accumulated into gf and K ax subtracted from gg, so no temporaries
    for j in range(m):
        s = 0.0
        for i in range(n):
            kji = K[j, i]
            gf[i] += kji * ay[j]
            s += kji * ax[i]
        gg[j] -= s
    total = 0.0
    for i in range(n):
        out[ox + i] = z[ovx + i]
        v = -damp * z[ovx + i] - beta * (gf[i] + eps * z[ox + i])
        out[ovx + i] = v
        total += v
    for j in range(m):
        out[oy + j] = z[ovy + j]
        v = -damp * z[ovy + j] - beta * (gg[j] + eps * z[oy + j])
        out[ovy + j] = v
        total += v
    # a NaN or inf anywhere makes the sum non-finite (overflow of finite terms is also caught)
    return math.isfinite(total)


@njit(cache=True)
def rhs_once(t, z, n, m, K, prm, kind, fpar, fvec, gvec):
    out = np.empty(z.size)
    _rhs(t, z, n, m, K, prm, kind, fpar, fvec, gvec, out,
         np.empty(n), np.empty(m), np.empty(n), np.empty(m))
    return out


@njit(cache=True, nogil=True)
def advance(ts, out, nxt, stop, y, k1, t, h, t_end, rtol, atol, h_min, h_max,
            n, m, K, prm, kind, fpar, fvec, gvec):
    """Step until samples ``[nxt, stop)`` are written or an error occurs.

    ``y`` and ``k1`` are updated in place. Returns
    ``(status, nxt, t, h, accepted, rejected, evals)``.
    """
    size = y.size
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    k5 = np.empty(size)
    k6 = np.empty(size)
    k7 = np.empty(size)
    yt = np.empty(size)
    yn = np.empty(size)
    gf = np.empty(n)
    gg = np.empty(m)
    ax = np.empty(n)
    ay = np.empty(m)
    accepted = 0
    rejected = 0
    evals = 0
    n_samples = ts.size
    while nxt < stop:
        last = False
        if t + h >= t_end or t_end - (t + h) < h_min:
            h = t_end - t
            last = True
        for i in range(size):
            yt[i] = y[i] + h * (A21 * k1[i])
        ok = _rhs(t + C2 * h, yt, n, m, K, prm, kind, fpar, fvec, gvec, k2, gf, gg, ax, ay)
        for i in range(size):
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        ok &= _rhs(t + C3 * h, yt, n, m, K, prm, kind, fpar, fvec, gvec, k3, gf, gg, ax, ay)
        for i in range(size):
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        ok &= _rhs(t + C4 * h, yt, n, m, K, prm, kind, fpar, fvec, gvec, k4, gf, gg, ax, ay)
        for i in range(size):
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        ok &= _rhs(t + C5 * h, yt, n, m, K, prm, kind, fpar, fvec, gvec, k5, gf, gg, ax, ay)
        for i in range(size):
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        ok &= _rhs(t + h, yt, n, m, K, prm, kind, fpar, fvec, gvec, k6, gf, gg, ax, ay)
        for i in range(size):
            yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        t_new = t_end if last else t + h
        ok &= _rhs(t_new, yn, n, m, K, prm, kind, fpar, fvec, gvec, k7, gf, gg, ax, ay)
        evals += 6
        if not ok:
            return STATUS_NONFINITE, nxt, t, h, accepted, rejected, evals
        acc = 0.0
        for i in range(size):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(yn[i]), abs(y[i]))
            acc += (e / sc) ** 2
        err = math.sqrt(acc / size)
        if err == 0.0:
            fac = FAC_MAX
        else:
            fac = min(FAC_MAX, max(FAC_MIN, SAFETY * err ** -0.2))
        if err > 1.0:
            rejected += 1
            h *= fac
            if h < h_min:
                return STATUS_UNDERFLOW, nxt, t, h, accepted, rejected, evals
            continue
        accepted += 1
        if nxt < n_samples and ts[nxt] <= t_new:
            while nxt < n_samples and ts[nxt] <= t_new:
                if ts[nxt] == t_new:
                    for i in range(size):
                        out[nxt, i] = yn[i]
                else:
                    th = (ts[nxt] - t) / h
                    th1 = 1.0 - th
                    for i in range(size):
                        r2 = yn[i] - y[i]
                        r3 = h * k1[i] - r2
                        r4 = r2 - h * k7[i] - r3
                        r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                        out[nxt, i] = y[i] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))
                nxt += 1
        t = t_new
        for i in range(size):
            y[i] = yn[i]
            k1[i] = k7[i]
        h = min(h * fac, h_max)
    return STATUS_PAUSED if nxt < n_samples else STATUS_DONE, nxt, t, h, accepted, rejected, evals
