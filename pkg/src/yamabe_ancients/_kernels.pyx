# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implicit-Euler kernels (same contracts as ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, fabs, isfinite, log, log1p, expm1, exp

cnp.import_array()


cdef void _thomas(double[::1] lo, double[::1] di, double[::1] up, double[::1] rhs,
                  double[::1] cw, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = di.shape[0], i
    cdef double m
    cw[0] = up[0] / di[0]
    out[0] = rhs[0] / di[0]
    for i in range(1, n):
        m = di[i] - lo[i] * cw[i - 1]
        cw[i] = up[i] / m
        out[i] = (rhs[i] - lo[i] * out[i - 1]) / m
    for i in range(n - 2, -1, -1):
        out[i] -= cw[i] * out[i + 1]


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    cdef double[::1] lo = np.ascontiguousarray(lower, dtype=float)
    cdef double[::1] di = np.ascontiguousarray(diag, dtype=float)
    cdef double[::1] up = np.ascontiguousarray(upper, dtype=float)
    cdef double[::1] b = np.ascontiguousarray(rhs, dtype=float)
    out = np.empty(di.shape[0])
    cw = np.empty(di.shape[0])
    _thomas(lo, di, up, b, cw, out)
    return out


def conformal_step(phi_old, double phi_l, double phi_r, double dtau, double dx, double p,
                   double tol=1e-12, int maxit=30):
    """One implicit-Euler step of (phi^p)_tau = phi_xx + phi^p - phi."""
    cdef double[::1] old = np.ascontiguousarray(phi_old, dtype=float)
    cdef Py_ssize_t N = old.shape[0], n = N - 2, i
    x_arr = np.array(old, dtype=float)
    cdef double[::1] x = x_arr
    x[0] = phi_l
    x[N - 1] = phi_r
    cdef double[::1] oldp = np.empty(n)
    cdef double[::1] g = np.empty(n)
    cdef double[::1] lo = np.empty(n)
    cdef double[::1] di = np.empty(n)
    cdef double[::1] up = np.empty(n)
    cdef double[::1] cw = np.empty(n)
    cdef double[::1] delta = np.empty(n)
    cdef double r = dtau / (dx * dx), c, cp1, cp, err, step
    cdef int it
    cdef bint ok
    for i in range(n):
        oldp[i] = pow(old[i + 1], p)
        lo[i] = -r
        up[i] = -r
    for it in range(maxit + 1):
        err = 0.0
        for i in range(n):
            c = x[i + 1]
            cp1 = pow(c, p - 1.0)
            cp = cp1 * c
            g[i] = -(cp - oldp[i] - r * (x[i] - 2.0 * c + x[i + 2]) - dtau * (cp - c))
            di[i] = p * cp1 * (1.0 - dtau) + 2.0 * r + dtau
            if fabs(g[i]) > err:
                err = fabs(g[i])
        if err < tol:
            return x_arr, it, True
        if it == maxit or not isfinite(err):
            break
        _thomas(lo, di, up, g, cw, delta)
        step = 1.0
        while True:
            ok = True
            for i in range(n):
                if not (x[i + 1] + step * delta[i] > 0.0):
                    ok = False
                    break
            if ok or step < 1e-6:
                break
            step *= 0.5
        if not ok:
            break
        for i in range(n):
            x[i + 1] += step * delta[i]
    return x_arr, maxit, False


def pressure_step(u_old, double u_l, double u_r, double dtau, double dx, double p,
                  double tol=1e-12, int maxit=30):
    """One implicit-Euler step of the pressure equation."""
    cdef double[::1] old = np.ascontiguousarray(u_old, dtype=float)
    cdef Py_ssize_t N = old.shape[0], n = N - 2, i
    x_arr = np.array(old, dtype=float)
    cdef double[::1] x = x_arr
    x[0] = u_l
    x[N - 1] = u_r
    cdef double[::1] g = np.empty(n)
    cdef double[::1] lo = np.empty(n)
    cdef double[::1] di = np.empty(n)
    cdef double[::1] up = np.empty(n)
    cdef double[::1] cw = np.empty(n)
    cdef double[::1] delta = np.empty(n)
    cdef double pm1 = p - 1.0, P = p / (p - 1.0), idx2 = 1.0 / (dx * dx)
    cdef double c, d1, d2, err, sc, step
    cdef int it
    cdef bint ok
    for it in range(maxit + 1):
        err = 0.0
        for i in range(n):
            c = x[i + 1]
            d1 = (x[i + 2] - x[i]) / (2.0 * dx)
            d2 = (x[i + 2] - 2.0 * c + x[i]) * idx2
            g[i] = -(p * (c - old[i + 1]) - dtau * (c * d2 - P * d1 * d1 + pm1 * (c * c - c)))
            di[i] = p - dtau * (d2 - 2.0 * c * idx2 + pm1 * (2.0 * c - 1.0))
            lo[i] = -dtau * (c * idx2 + P * d1 / dx)
            up[i] = -dtau * (c * idx2 - P * d1 / dx)
            sc = c * c if c * c > 1.0 else 1.0
            if fabs(g[i]) / sc > err:
                err = fabs(g[i]) / sc
        if err < tol:
            return x_arr, it, True
        if it == maxit or not isfinite(err):
            break
        _thomas(lo, di, up, g, cw, delta)
        step = 1.0
        while True:
            ok = True
            for i in range(n):
                if not (x[i + 1] + step * delta[i] > 0.0):
                    ok = False
                    break
            if ok or step < 1e-6:
                break
            step *= 0.5
        if not ok:
            break
        for i in range(n):
            x[i + 1] += step * delta[i]
    return x_arr, maxit, False


def logphi_step(l_old, double l_l, double l_r, double dtau, double dx, double p,
                double tol=1e-12, int maxit=30):
    """Implicit-Euler step of the conformal equation for l = ln phi (split rows)."""
    cdef double[::1] old = np.ascontiguousarray(l_old, dtype=float)
    cdef Py_ssize_t N = old.shape[0], n = N - 2, i
    x_arr = np.array(old, dtype=float)
    cdef double[::1] x = x_arr
    x[0] = l_l
    x[N - 1] = l_r
    cdef double[::1] e_old = np.empty(n)
    cdef double[::1] p_old = np.empty(n)
    cdef double[::1] phi = np.empty(N)
    cdef double[::1] eps = np.empty(N)
    cdef double[::1] var = np.empty(n)
    cdef double[::1] sg = np.empty(n)
    cdef double[::1] g = np.empty(n)
    cdef double[::1] lo = np.empty(n)
    cdef double[::1] di = np.empty(n)
    cdef double[::1] up = np.empty(n)
    cdef double[::1] cw = np.empty(n)
    cdef double[::1] delta = np.empty(n)
    cdef double r = dtau / (dx * dx), ln2 = log(2.0), c, cp1, ep, lap, reac, dpow, t, step
    cdef int it
    cdef bint ok, small
    for i in range(n):
        e_old[i] = -expm1(p * old[i + 1])
        p_old[i] = exp(p * old[i + 1])
    for it in range(maxit):
        ok = True
        for i in range(N):
            # one transcendental per node; each branch keeps relative precision
            if x[i] >= -ln2:
                eps[i] = -expm1(x[i])
                phi[i] = 1.0 - eps[i]
            else:
                phi[i] = exp(x[i])
                eps[i] = 1.0 - phi[i]
        for i in range(n):
            c = x[i + 1]
            cp1 = exp((p - 1.0) * c)
            if c >= -ln2:
                ep = -expm1(p * c)
                sg[i] = -1.0
                var[i] = eps[i + 1]
                lap = -(eps[i] - 2.0 * eps[i + 1] + eps[i + 2])
                reac = eps[i + 1] - ep
                dpow = e_old[i] - ep
            else:
                sg[i] = 1.0
                var[i] = phi[i + 1]
                lap = phi[i] - 2.0 * phi[i + 1] + phi[i + 2]
                reac = cp1 * phi[i + 1] - phi[i + 1]
                dpow = cp1 * phi[i + 1] - p_old[i]
            g[i] = -sg[i] * (dpow - r * lap - dtau * reac)
            di[i] = p * cp1 * (1.0 - dtau) + 2.0 * r + dtau
            if not isfinite(g[i]):
                ok = False
        if not ok:
            break
        for i in range(n):
            lo[i] = -r * sg[i] * (sg[i - 1] if i > 0 else 1.0)
            up[i] = -r * sg[i] * (sg[i + 1] if i < n - 1 else 1.0)
        _thomas(lo, di, up, g, cw, delta)
        step = 1.0
        while True:
            ok = True
            for i in range(n):
                t = var[i] + step * delta[i]
                if not ((sg[i] < 0.0 and t < 1.0) or (sg[i] > 0.0 and t > 0.0)):
                    ok = False
                    break
            if ok or step < 1e-6:
                break
            step *= 0.5
        if not ok:
            break
        small = step == 1.0
        for i in range(n):
            t = var[i] + step * delta[i]
            x[i + 1] = log1p(-t) if sg[i] < 0.0 else log(t)
            if small and not (fabs(delta[i]) <= tol * fabs(t)):
                small = False
        if small:
            return x_arr, it + 1, True
    return x_arr, maxit, False
