"""Pure numpy implicit-Euler kernels; used when the compiled core is absent."""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

_LN2 = float(np.log(2.0))


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.size
    ab = np.empty((3, n))
    ab[0, 1:] = upper[:-1]
    ab[0, 0] = 0.0
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _newton(x, resid_jac, tol, maxit, admissible=None, rel_update=False):
    """Damped Newton on interior nodes; ``x`` holds fixed boundary values.

    Stops when the scaled residual is below ``tol`` or, with ``rel_update``,
    when every update is below ``tol`` relative to the iterate.
    """
    if admissible is None:
        def admissible(v):
            return v > 0.0
    for it in range(maxit + 1):
        g, lo, di, up, scale = resid_jac(x)
        if not rel_update and np.max(np.abs(g) / scale) < tol:
            return x, it, True
        if it == maxit:
            break
        delta = thomas(lo, di, up, -g)
        if not np.all(np.isfinite(delta)):
            break
        step = 1.0
        trial = x[1:-1] + delta
        while not np.all(admissible(trial)) and step > 1e-6:
            step *= 0.5
            trial = x[1:-1] + step * delta
        if not np.all(admissible(trial)):
            break
        x = x.copy()
        x[1:-1] = trial
        if rel_update and step == 1.0 and np.all(np.abs(delta) <= tol * np.abs(trial)):
            return x, it + 1, True
    return x, maxit, False


def conformal_step(phi_old, phi_l, phi_r, dtau, dx, p, tol=1e-12, maxit=30):
    """One implicit-Euler step of (phi^p)_tau = phi_xx + phi^p - phi.

    Solves ``phi^p - phi_old^p - dtau (phi_xx + phi^p - phi) = 0`` on the
    interior with Dirichlet values ``phi_l``, ``phi_r``.
    Returns ``(phi_new, newton_iterations, converged)``.
    """
    phi_old = np.asarray(phi_old, dtype=float)
    old_p = phi_old[1:-1] ** p
    r = dtau / dx ** 2
    x = phi_old.copy()
    x[0], x[-1] = phi_l, phi_r

    def resid_jac(x):
        c = x[1:-1]
        cp1 = c ** (p - 1.0)
        cp = cp1 * c
        g = cp - old_p - r * (x[:-2] - 2.0 * c + x[2:]) - dtau * (cp - c)
        di = p * cp1 * (1.0 - dtau) + 2.0 * r + dtau
        off = np.full(c.size, -r)
        return g, off, di, off, 1.0

    return _newton(x, resid_jac, tol, maxit)


def pressure_step(u_old, u_l, u_r, dtau, dx, p, tol=1e-12, maxit=30):
    """One implicit-Euler step of p u_tau = u u_xx - p/(p-1) u_x^2 + (p-1)(u^2 - u).

    The residual is scaled by ``max(1, u^2)`` node by node for the stopping test.
    """
    u_old = np.asarray(u_old, dtype=float)
    pm1 = p - 1.0
    P = p / pm1
    x = u_old.copy()
    x[0], x[-1] = u_l, u_r
    uo = u_old[1:-1]

    def resid_jac(x):
        c = x[1:-1]
        d1 = (x[2:] - x[:-2]) / (2.0 * dx)
        d2 = (x[2:] - 2.0 * c + x[:-2]) / dx ** 2
        g = p * (c - uo) - dtau * (c * d2 - P * d1 * d1 + pm1 * (c * c - c))
        di = p - dtau * (d2 - 2.0 * c / dx ** 2 + pm1 * (2.0 * c - 1.0))
        lo = -dtau * (c / dx ** 2 + P * d1 / dx)
        up = -dtau * (c / dx ** 2 - P * d1 / dx)
        return g, lo, di, up, np.maximum(1.0, c * c)

    return _newton(x, resid_jac, tol, maxit)


def logphi_step(l_old, l_l, l_r, dtau, dx, p, tol=1e-12, maxit=30):
    """Implicit-Euler step of the conformal equation for the stored value l = ln phi.

    Rows with phi >= 1/2 are written for the deficit eps = 1 - phi,
    ``E - E_old - r lap(eps) - dtau (E - eps)`` with E = 1 - phi^p, the others
    for phi itself; the Newton unknown of each node follows the same split.
    This keeps full relative precision both where phi is within rounding of 1
    and deep in the tips.  Newton stops once every update is below ``tol``
    relative to the unknown it changes.
    """
    l_old = np.asarray(l_old, dtype=float)
    lo_ = l_old[1:-1]
    e_old = -np.expm1(p * lo_)  # 1 - phi_old^p
    p_old = np.exp(p * lo_)  # phi_old^p
    r = dtau / dx ** 2
    x = l_old.copy()
    x[0], x[-1] = l_l, l_r
    for it in range(maxit):
        c = x[1:-1]
        cen = c >= -_LN2
        s = np.where(cen, -1.0, 1.0)
        phi = np.exp(x)
        eps = -np.expm1(x)
        # Laplacian of phi: via eps where the centre node is in the eps region
        lap = np.where(cen, -(eps[:-2] - 2.0 * eps[1:-1] + eps[2:]),
                       phi[:-2] - 2.0 * phi[1:-1] + phi[2:])
        pc = phi[1:-1]
        # phi^p - phi and phi^p - phi_old^p, cancellation-free per region
        ep = -np.expm1(p * c)
        reac = np.where(cen, eps[1:-1] - ep, np.exp(p * c) - pc)
        dpow = np.where(cen, e_old - ep, np.exp(p * c) - p_old)
        g = s * (dpow - r * lap - dtau * reac)
        jd = p * np.exp((p - 1.0) * c) * (1.0 - dtau) + 2.0 * r + dtau
        sl = np.concatenate([[1.0], s])
        sr = np.concatenate([s, [1.0]])
        lo = -r * s * sl[:-1]
        up = -r * s * sr[1:]
        if not np.all(np.isfinite(g)):
            break
        # J_G[i, j] = s_i J_F[i, j] s_j on the mixed unknowns
        delta = thomas(lo, jd, up, -g)
        if not np.all(np.isfinite(delta)):
            break
        var = np.where(cen, eps[1:-1], pc)
        step = 1.0
        while step > 1e-6:
            trial = var + step * delta
            if np.all(np.where(cen, trial < 1.0, trial > 0.0)):
                break
            step *= 0.5
        else:
            break
        trial = var + step * delta
        x = x.copy()
        x[1:-1] = np.where(cen, np.log1p(-np.where(cen, trial, 0.0)),
                           np.log(np.where(cen, 1.0, trial)))
        if step == 1.0 and np.all(np.abs(delta) <= tol * np.abs(trial)):
            return x, it + 1, True
    return x, maxit, False
