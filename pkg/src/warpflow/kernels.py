"""Fused stencil kernels for the geometry hot path.

The flow spends most of its time assembling Christoffel symbols and Ricci
tensors from metric neighbors.  Whole-array numpy does this in a dozen
passes over multi-megabyte temporaries; the fused kernels below do it in one
pass per field using flat-index neighbor tables, which matters on the
single-core grids this package targets.

Everything here is an optional accelerator: ``geometry`` falls back to the
pure-numpy implementations when numba is unavailable or when
``WARPFLOW_PURE_NUMPY`` is set, and the test suite pins the two paths
against each other.  Division by the grid spacings mirrors the numpy
operation order so both paths agree to rounding.
"""

from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

ENABLED = os.environ.get("WARPFLOW_PURE_NUMPY", "") == ""
try:  # pragma: no cover - exercised implicitly
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None
    ENABLED = False


@lru_cache(maxsize=None)
def neighbor_tables(shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of the +1/-1 periodic neighbors along every axis, (n, P)."""
    ids = np.arange(int(np.prod(shape)), dtype=np.int64).reshape(shape)
    plus = np.stack([np.roll(ids, -1, axis=i).ravel() for i in range(len(shape))])
    minus = np.stack([np.roll(ids, 1, axis=i).ravel() for i in range(len(shape))])
    return plus, minus


if njit is not None:

    @njit(cache=True, fastmath=True)
    def christoffel_kernel(g, ginv, idxp, idxm, inv_two_h):  # pragma: no cover - jitted
        P, n, _ = g.shape
        gamma = np.empty((P, n, n, n))
        dg = np.empty((n, n, n))
        for p in range(P):
            # dg[k, i, j] = d_k g_{ij}; only the upper triangle is gathered
            for k in range(n):
                pp = idxp[k, p]
                pm = idxm[k, p]
                w = inv_two_h[k]
                for i in range(n):
                    for j in range(i, n):
                        v = (g[pp, i, j] - g[pm, i, j]) * w
                        dg[k, i, j] = v
                        dg[k, j, i] = v
            for a in range(n):
                for i in range(n):
                    for j in range(i, n):
                        acc = 0.0
                        for d in range(n):
                            acc += ginv[p, a, d] * (dg[i, d, j] + dg[j, d, i] - dg[d, i, j])
                        v = 0.5 * acc
                        gamma[p, a, i, j] = v
                        gamma[p, a, j, i] = v
        return gamma

    @njit(cache=True, fastmath=True)
    def ricci_kernel(gamma, idxp, idxm, inv_two_h):  # pragma: no cover - jitted
        P, n, _, _ = gamma.shape
        ric = np.empty((P, n, n))
        acc = np.empty((n, n))
        tr = np.empty(n)
        for p in range(P):
            for i in range(n):
                for j in range(n):
                    acc[i, j] = 0.0
            for k in range(n):
                kp = idxp[k, p]
                km = idxm[k, p]
                w = inv_two_h[k]
                for i in range(n):
                    for j in range(n):
                        acc[i, j] += (gamma[kp, k, i, j] - gamma[km, k, i, j]) * w
            for j in range(n):
                jp = idxp[j, p]
                jm = idxm[j, p]
                w = inv_two_h[j]
                for i in range(n):
                    dtr = 0.0
                    for k in range(n):
                        dtr += gamma[jp, k, k, i] - gamma[jm, k, k, i]
                    acc[i, j] -= dtr * w
            for q in range(n):
                t = 0.0
                for k in range(n):
                    t += gamma[p, k, q, k]
                tr[q] = t
            for q in range(n):
                t = 0.0
                for k in range(n):
                    t += gamma[p, k, q, k]
                tr[q] = t
            for i in range(n):
                for j in range(n):
                    quad = 0.0
                    for q in range(n):
                        quad += gamma[p, q, j, i] * tr[q]
                        for k in range(n):
                            quad -= gamma[p, q, k, i] * gamma[p, k, q, j]
                    ric[p, i, j] = acc[i, j] + quad
        for p in range(P):
            for i in range(n):
                for j in range(i, n):
                    s = 0.5 * (ric[p, i, j] + ric[p, j, i])
                    ric[p, i, j] = s
                    ric[p, j, i] = s
        return ric

    @njit(cache=True, fastmath=True)
    def hessian_kernel(f, gamma, ginv, idxp, idxm, two_h, h_sq):  # pragma: no cover
        P = f.shape[0]
        n = ginv.shape[-1]
        hess = np.empty((P, n, n))
        lap = np.empty(P)
        gradsq = np.empty(P)
        df = np.empty((P, n))
        inv2h = 1.0 / two_h
        invh2 = 1.0 / h_sq
        for p in range(P):
            for k in range(n):
                df[p, k] = (f[idxp[k, p]] - f[idxm[k, p]]) * inv2h[k]
            for i in range(n):
                hess[p, i, i] = (f[idxp[i, p]] - 2.0 * f[p] + f[idxm[i, p]]) * invh2[i]
                for j in range(i + 1, n):
                    pp = idxp[j, idxp[i, p]]
                    pm = idxm[j, idxp[i, p]]
                    mp = idxp[j, idxm[i, p]]
                    mm = idxm[j, idxm[i, p]]
                    mixed = ((f[pp] - f[pm]) * inv2h[j] - (f[mp] - f[mm]) * inv2h[j]) * inv2h[i]
                    hess[p, i, j] = mixed
                    hess[p, j, i] = mixed
            for i in range(n):
                for j in range(n):
                    corr = 0.0
                    for k in range(n):
                        corr += gamma[p, k, i, j] * df[p, k]
                    hess[p, i, j] -= corr
            lacc = 0.0
            gacc = 0.0
            for i in range(n):
                for j in range(n):
                    lacc += ginv[p, i, j] * hess[p, i, j]
                    gacc += ginv[p, i, j] * df[p, i] * df[p, j]
            lap[p] = lacc
            gradsq[p] = gacc
        return hess, lap, gradsq, df

    @njit(cache=True, fastmath=True)
    def deturck_kernel(gamma, gamma_ref, g, ginv, idxp, idxm, two_h):  # pragma: no cover
        P, n, _, _ = gamma.shape
        v_up = np.empty((P, n))
        v_cov = np.empty((P, n))
        sym = np.empty((P, n, n))
        for p in range(P):
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    for l in range(n):
                        acc += ginv[p, k, l] * (gamma[p, j, k, l] - gamma_ref[p, j, k, l])
                v_up[p, j] = acc
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += g[p, i, j] * v_up[p, j]
                v_cov[p, i] = acc
        inv2h = 1.0 / two_h
        for p in range(P):
            for i in range(n):
                for j in range(n):
                    grad = (v_cov[idxp[i, p], j] - v_cov[idxm[i, p], j]) * inv2h[i]
                    for k in range(n):
                        grad -= gamma[p, k, i, j] * v_cov[p, k]
                    sym[p, i, j] = grad
        for p in range(P):
            for i in range(n):
                for j in range(i, n):
                    s = sym[p, i, j] + sym[p, j, i]
                    sym[p, i, j] = s
                    sym[p, j, i] = s
        return v_up, sym


if njit is not None:

    @njit(cache=True, fastmath=True)
    def inv_det_kernel(g):  # pragma: no cover - jitted
        """Batched cofactor inverse and determinant for n <= 4."""
        P, n, _ = g.shape
        inv = np.empty_like(g)
        det = np.empty(P)
        if n == 1:
            for p in range(P):
                det[p] = g[p, 0, 0]
                inv[p, 0, 0] = 1.0 / det[p]
        elif n == 2:
            for p in range(P):
                d = g[p, 0, 0] * g[p, 1, 1] - g[p, 0, 1] * g[p, 1, 0]
                det[p] = d
                inv[p, 0, 0] = g[p, 1, 1] / d
                inv[p, 1, 1] = g[p, 0, 0] / d
                inv[p, 0, 1] = -g[p, 0, 1] / d
                inv[p, 1, 0] = -g[p, 1, 0] / d
        elif n == 3:
            for p in range(P):
                c00 = g[p, 1, 1] * g[p, 2, 2] - g[p, 1, 2] * g[p, 2, 1]
                c01 = g[p, 1, 2] * g[p, 2, 0] - g[p, 1, 0] * g[p, 2, 2]
                c02 = g[p, 1, 0] * g[p, 2, 1] - g[p, 1, 1] * g[p, 2, 0]
                d = g[p, 0, 0] * c00 + g[p, 0, 1] * c01 + g[p, 0, 2] * c02
                det[p] = d
                inv[p, 0, 0] = c00 / d
                inv[p, 1, 0] = c01 / d
                inv[p, 2, 0] = c02 / d
                inv[p, 0, 1] = (g[p, 0, 2] * g[p, 2, 1] - g[p, 0, 1] * g[p, 2, 2]) / d
                inv[p, 1, 1] = (g[p, 0, 0] * g[p, 2, 2] - g[p, 0, 2] * g[p, 2, 0]) / d
                inv[p, 2, 1] = (g[p, 0, 1] * g[p, 2, 0] - g[p, 0, 0] * g[p, 2, 1]) / d
                inv[p, 0, 2] = (g[p, 0, 1] * g[p, 1, 2] - g[p, 0, 2] * g[p, 1, 1]) / d
                inv[p, 1, 2] = (g[p, 0, 2] * g[p, 1, 0] - g[p, 0, 0] * g[p, 1, 2]) / d
                inv[p, 2, 2] = (g[p, 0, 0] * g[p, 1, 1] - g[p, 0, 1] * g[p, 1, 0]) / d
        else:
            for p in range(P):
                s0 = g[p, 0, 0] * g[p, 1, 1] - g[p, 1, 0] * g[p, 0, 1]
                s1 = g[p, 0, 0] * g[p, 1, 2] - g[p, 1, 0] * g[p, 0, 2]
                s2 = g[p, 0, 0] * g[p, 1, 3] - g[p, 1, 0] * g[p, 0, 3]
                s3 = g[p, 0, 1] * g[p, 1, 2] - g[p, 1, 1] * g[p, 0, 2]
                s4 = g[p, 0, 1] * g[p, 1, 3] - g[p, 1, 1] * g[p, 0, 3]
                s5 = g[p, 0, 2] * g[p, 1, 3] - g[p, 1, 2] * g[p, 0, 3]
                c5 = g[p, 2, 2] * g[p, 3, 3] - g[p, 3, 2] * g[p, 2, 3]
                c4 = g[p, 2, 1] * g[p, 3, 3] - g[p, 3, 1] * g[p, 2, 3]
                c3 = g[p, 2, 1] * g[p, 3, 2] - g[p, 3, 1] * g[p, 2, 2]
                c2 = g[p, 2, 0] * g[p, 3, 3] - g[p, 3, 0] * g[p, 2, 3]
                c1 = g[p, 2, 0] * g[p, 3, 2] - g[p, 3, 0] * g[p, 2, 2]
                c0 = g[p, 2, 0] * g[p, 3, 1] - g[p, 3, 0] * g[p, 2, 1]
                d = s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
                det[p] = d
                inv[p, 0, 0] = (g[p, 1, 1] * c5 - g[p, 1, 2] * c4 + g[p, 1, 3] * c3) / d
                inv[p, 0, 1] = (-g[p, 0, 1] * c5 + g[p, 0, 2] * c4 - g[p, 0, 3] * c3) / d
                inv[p, 0, 2] = (g[p, 3, 1] * s5 - g[p, 3, 2] * s4 + g[p, 3, 3] * s3) / d
                inv[p, 0, 3] = (-g[p, 2, 1] * s5 + g[p, 2, 2] * s4 - g[p, 2, 3] * s3) / d
                inv[p, 1, 0] = (-g[p, 1, 0] * c5 + g[p, 1, 2] * c2 - g[p, 1, 3] * c1) / d
                inv[p, 1, 1] = (g[p, 0, 0] * c5 - g[p, 0, 2] * c2 + g[p, 0, 3] * c1) / d
                inv[p, 1, 2] = (-g[p, 3, 0] * s5 + g[p, 3, 2] * s2 - g[p, 3, 3] * s1) / d
                inv[p, 1, 3] = (g[p, 2, 0] * s5 - g[p, 2, 2] * s2 + g[p, 2, 3] * s1) / d
                inv[p, 2, 0] = (g[p, 1, 0] * c4 - g[p, 1, 1] * c2 + g[p, 1, 3] * c0) / d
                inv[p, 2, 1] = (-g[p, 0, 0] * c4 + g[p, 0, 1] * c2 - g[p, 0, 3] * c0) / d
                inv[p, 2, 2] = (g[p, 3, 0] * s4 - g[p, 3, 1] * s2 + g[p, 3, 3] * s0) / d
                inv[p, 2, 3] = (-g[p, 2, 0] * s4 + g[p, 2, 1] * s2 - g[p, 2, 3] * s0) / d
                inv[p, 3, 0] = (-g[p, 1, 0] * c3 + g[p, 1, 1] * c1 - g[p, 1, 2] * c0) / d
                inv[p, 3, 1] = (g[p, 0, 0] * c3 - g[p, 0, 1] * c1 + g[p, 0, 2] * c0) / d
                inv[p, 3, 2] = (-g[p, 3, 0] * s3 + g[p, 3, 1] * s1 - g[p, 3, 2] * s0) / d
                inv[p, 3, 3] = (g[p, 2, 0] * s3 - g[p, 2, 1] * s1 + g[p, 2, 2] * s0) / d
        return inv, det

    @njit(cache=True)
    def min_pivot_shifted(g, eps):  # pragma: no cover - jitted
        """Cholesky feasibility of g - eps*I per point: 1.0 where PD, else 0.0.

        Success of the factorization of g - eps*I is equivalent to the
        smallest eigenvalue exceeding eps.
        """
        P, n, _ = g.shape
        ok = np.ones(P)
        a = np.empty((n, n))
        for p in range(P):
            good = True
            for i in range(n):
                for j in range(n):
                    a[i, j] = g[p, i, j] - (eps if i == j else 0.0)
            for k in range(n):
                if not good:
                    break
                pivot = a[k, k]
                for m in range(k):
                    pivot -= a[k, m] * a[k, m]
                if not (pivot > 0.0):
                    good = False
                    break
                root = np.sqrt(pivot)
                a[k, k] = root
                for i in range(k + 1, n):
                    acc = a[i, k]
                    for m in range(k):
                        acc -= a[i, m] * a[k, m]
                    a[i, k] = acc / root
            if not good:
                ok[p] = 0.0
        return ok
