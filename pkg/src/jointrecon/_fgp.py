"""Compiled kernels for the dual fast gradient projection of the dTV prox (2-D only).

Array layout: images ``(c, n0, n1)`` with ``c`` real channels, dual fields
``(c, 2, n0, n1)``, side-information vectors ``xi`` ``(2, n0, n1)``.
"""
import numba as nb
import numpy as np

LIPSCHITZ = 8.0


@nb.njit(cache=True)
def _project(xi, a0, a1, i, j):
    s = xi[0, i, j] * a0 + xi[1, i, j] * a1
    return a0 - xi[0, i, j] * s, a1 - xi[1, i, j] * s


@nb.njit(cache=True)
def _primal_from_dual(z, xi, p, nonneg, y):
    """y = proj(z + div(P p)); ``proj`` is the identity unless ``nonneg``."""
    c, n0, n1 = z.shape
    w0 = np.empty((n0, n1))
    w1 = np.empty((n0, n1))
    for ch in range(c):
        for i in range(n0):
            for j in range(n1):
                w0[i, j], w1[i, j] = _project(xi, p[ch, 0, i, j], p[ch, 1, i, j], i, j)
        for i in range(n0):
            for j in range(n1):
                d = 0.0
                if i < n0 - 1:
                    d += w0[i, j]
                if j < n1 - 1:
                    d += w1[i, j]
                if i > 0:
                    d -= w0[i - 1, j]
                if j > 0:
                    d -= w1[i, j - 1]
                v = z[ch, i, j] + d
                if nonneg and v < 0.0:
                    v = 0.0
                y[ch, i, j] = v


@nb.njit(cache=True)
def _dtv_sum(y, xi):
    c, n0, n1 = y.shape
    total = 0.0
    for i in range(n0):
        for j in range(n1):
            acc = 0.0
            for ch in range(c):
                g0 = y[ch, i + 1, j] - y[ch, i, j] if i < n0 - 1 else 0.0
                g1 = y[ch, i, j + 1] - y[ch, i, j] if j < n1 - 1 else 0.0
                a0, a1 = _project(xi, g0, g1, i, j)
                acc += a0 * a0 + a1 * a1
            total += np.sqrt(acc)
    return total


@nb.njit(cache=True)
def _gap(z, xi, lam, y):
    primal = 0.0
    zz = 0.0
    yy = 0.0
    c, n0, n1 = z.shape
    for ch in range(c):
        for i in range(n0):
            for j in range(n1):
                r = y[ch, i, j] - z[ch, i, j]
                primal += 0.5 * r * r
                zz += z[ch, i, j] * z[ch, i, j]
                yy += y[ch, i, j] * y[ch, i, j]
    primal += lam * _dtv_sum(y, xi)
    dual = 0.5 * zz - 0.5 * yy
    return primal, primal - dual


@nb.njit(cache=True)
def fgp(z, xi, lam, q, iters, tol, nonneg, check_every):
    """Accelerated projected gradient on the dual; ``q`` is updated in place.

    Momentum is restarted whenever the step direction turns against the last
    update. Returns ``(y, gap, primal, iterations)`` with ``y`` recovered from
    the final dual iterate.
    """
    c, n0, n1 = z.shape
    y = np.empty_like(z)
    r = q.copy()
    q_old = q.copy()
    t = 1.0
    step = 1.0 / LIPSCHITZ
    gap = np.inf
    primal = 0.0
    k = 0
    if lam <= 0.0:
        for ch in range(c):
            for i in range(n0):
                for j in range(n1):
                    v = z[ch, i, j]
                    y[ch, i, j] = 0.0 if (nonneg and v < 0.0) else v
        q[:] = 0.0
        return y, 0.0, 0.5 * np.sum((y - z) ** 2), 0
    while k < iters:
        _primal_from_dual(z, xi, r, nonneg, y)
        q_old[:] = q
        restart_dot = 0.0
        for i in range(n0):
            for j in range(n1):
                nrm = 0.0
                for ch in range(c):
                    g0 = y[ch, i + 1, j] - y[ch, i, j] if i < n0 - 1 else 0.0
                    g1 = y[ch, i, j + 1] - y[ch, i, j] if j < n1 - 1 else 0.0
                    a0, a1 = _project(xi, g0, g1, i, j)
                    v0 = r[ch, 0, i, j] + step * a0
                    v1 = r[ch, 1, i, j] + step * a1
                    q[ch, 0, i, j] = v0
                    q[ch, 1, i, j] = v1
                    nrm += v0 * v0 + v1 * v1
                nrm = np.sqrt(nrm)
                scale = lam / nrm if nrm > lam else 1.0
                for ch in range(c):
                    q[ch, 0, i, j] *= scale
                    q[ch, 1, i, j] *= scale
                    # gradient-restart test: <r - q_new, q_new - q_old> > 0
                    for a in range(2):
                        restart_dot += (r[ch, a, i, j] - q[ch, a, i, j]) * (
                            q[ch, a, i, j] - q_old[ch, a, i, j]
                        )
        k += 1
        if restart_dot > 0.0:
            t = 1.0
            r[:] = q
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            for ch in range(c):
                for a in range(2):
                    for i in range(n0):
                        for j in range(n1):
                            r[ch, a, i, j] = q[ch, a, i, j] + beta * (q[ch, a, i, j] - q_old[ch, a, i, j])
            t = t_new
        if k % check_every == 0 or k == iters:
            _primal_from_dual(z, xi, q, nonneg, y)
            primal, gap = _gap(z, xi, lam, y)
            if gap <= tol * (1.0 + abs(primal)):
                return y, gap, primal, k
    _primal_from_dual(z, xi, q, nonneg, y)
    primal, gap = _gap(z, xi, lam, y)
    return y, gap, primal, k


@nb.njit(cache=True)
def dtv_sum(y, xi):
    return _dtv_sum(y, xi)
