"""Coordinate changes and curvature monitors for the conformal factor.

The metric ``phi^{4/(n-2)} (dt^2 + g_{S^{n-1}})`` is written in the geometric
cylinder coordinate ``t``; the normalized coordinate of the evolution is
``x = m t`` with ``m = (n-2)/2``, which is what makes the equation read
``(phi^p)_tau = phi_xx + phi^p - phi``.  In this gauge the scalar curvature is
``R = (n-1)(n-2) * Rtilde`` with ``Rtilde = phi^{-p}(phi - phi_xx)``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .profiles import DomainError, ModelParams


def gauge_constant(params: ModelParams) -> float:
    """R / Rtilde in the normalized gauge."""
    n = params.n
    return float((n - 1) * (n - 2))


# ---------------------------------------------------------------------------
# coordinate changes


def cylindrical_from_radial(r, phihat, T: float, t: float, params: ModelParams):
    """(x, tau, phi) with phi = (T-t)^{-1/(p-1)} r^{2/(p-1)} phihat, x = ln r, tau = -ln(T-t)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("radial samples must be positive")
    if not T > t:
        raise DomainError("need T > t")
    e = 1.0 / params.pm1
    phi = (T - t) ** (-e) * r ** (2 * e) * np.asarray(phihat, dtype=float)
    return np.log(r), -np.log(T - t), phi


def radial_from_cylindrical(x, tau: float, phi, T: float, params: ModelParams):
    """Inverse of :func:`cylindrical_from_radial`: returns (r, t, phihat)."""
    r = np.exp(np.asarray(x, dtype=float))
    dt = np.exp(-tau)
    e = 1.0 / params.pm1
    phihat = np.asarray(phi, dtype=float) * dt ** e * r ** (-2 * e)
    return r, T - dt, phihat


def normalized_x(x_raw, params: ModelParams):
    """Raw log-radius ln r -> normalized coordinate m ln r of the evolution."""
    return params.m * np.asarray(x_raw, dtype=float)


@dataclass
class PolarFrame:
    y: np.ndarray
    phihat: np.ndarray
    x: np.ndarray
    xbar: float
    side: str

    def bounds(self, M: float) -> tuple[float, float]:
        sel = np.abs(self.y) <= M
        return float(self.phihat[sel].min()), float(self.phihat[sel].max())


def polar_xbar(lam: float, h: float, tau: float, M: float, params: ModelParams) -> float:
    """Cylindrical position of the polar radius 2M for the left wave."""
    return lam * tau - h + (2.0 / params.pm1) * np.log(2.0 * M)


def polar_frame(x, phi, lam: float, h: float, tau: float, M: float, params: ModelParams, *,
                side: str = "left", n_y: int = 400, y_min: float | None = None) -> PolarFrame:
    """Blow up the tip: phihat(y) = phi e^{-z}, |y| = e^{((p-1)/2) z}, z = +-x - lam tau + h.

    ``side='right'`` uses the mirrored coordinate ``-x`` (the reflected wave).
    The polar grid covers ``y_min <= |y| <= 2M``; ``y_min`` defaults to the
    smallest radius resolved by the cylindrical grid.
    """
    x = np.asarray(x, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if side == "right":
        x, phi = -x[::-1], phi[::-1]
    elif side != "left":
        raise ValueError("side must be 'left' or 'right'")
    if np.any(phi <= 0):
        raise DomainError("phi must be positive")
    half = 0.5 * params.pm1
    ylo = np.exp(half * (x[0] - lam * tau + h))
    if y_min is None:
        y_min = ylo
    if y_min < ylo * (1 - 1e-12) or 2 * M > np.exp(half * (x[-1] - lam * tau + h)):
        raise DomainError("requested polar radius lies outside the cylindrical grid")
    y = np.geomspace(y_min, 2 * M, n_y)
    z = np.log(y) / half
    xs = np.clip(z + lam * tau - h, x[0], x[-1])
    logphi = CubicSpline(x, np.log(phi))(xs)
    phihat = np.exp(logphi - z)
    if side == "right":
        xs = -xs
    return PolarFrame(y, phihat, xs, polar_xbar(lam, h, tau, M, params), side)


# ---------------------------------------------------------------------------
# curvature


def _check_positive(phi):
    phi = np.asarray(phi, dtype=float)
    if np.any(~(phi > 0)):
        raise DomainError("phi must be positive")
    return phi


def scalar_curvature_normalized(phi, dx: float, params: ModelParams, *, form: str = "direct"):
    """Rtilde = phi^{-p}(phi - phi_xx) on interior nodes (central differences).

    ``form='log'`` evaluates the same quantity as
    ``phi^{1-p}(1 - (ln phi)_xx - (ln phi)_x^2)``, which stays accurate where
    phi decays exponentially.
    """
    phi = _check_positive(phi)
    c = phi[1:-1]
    if form == "log":
        lg = np.log(phi)
        l1 = (lg[2:] - lg[:-2]) / (2 * dx)
        l2 = (lg[2:] - 2 * lg[1:-1] + lg[:-2]) / dx ** 2
        return c ** (-params.pm1) * (1.0 - l2 - l1 * l1)
    if form != "direct":
        raise ValueError("form must be 'direct' or 'log'")
    pxx = (phi[2:] - 2 * c + phi[:-2]) / dx ** 2
    return c ** (-params.p) * (c - pxx)


def sectional_curvatures(phi, dx: float, params: ModelParams):
    """(K_rad, K_tan) on interior nodes.

    With rho = phi^{1/m} and ds = rho dt (t = x/m),
    K_rad = -rho_ss / rho = -m (ln phi)_xx / phi^{p-1} and
    K_tan = (1 - rho_s^2) / rho^2 = (1 - (ln phi)_x^2) / phi^{p-1}.
    Derivatives of ln phi are central differences, which keeps exponential
    tips accurate.
    """
    phi = _check_positive(phi)
    lg = np.log(phi)
    l1 = (lg[2:] - lg[:-2]) / (2 * dx)
    l2 = (lg[2:] - 2 * lg[1:-1] + lg[:-2]) / dx ** 2
    w = phi[1:-1] ** (-params.pm1)
    return -params.m * l2 * w, (1.0 - l1 * l1) * w


def tensor_norm(K_rad, K_tan, params: ModelParams):
    n = params.n
    return np.sqrt(4 * (n - 1) * K_rad ** 2 + 2 * (n - 1) * (n - 2) * K_tan ** 2)


def trace_scalar(K_rad, K_tan, params: ModelParams):
    """R = 2(n-1) K_rad + (n-1)(n-2) K_tan."""
    n = params.n
    return 2 * (n - 1) * K_rad + (n - 1) * (n - 2) * K_tan


# ---------------------------------------------------------------------------
# reports


@dataclass
class CurvatureReport:
    times: np.ndarray
    x: np.ndarray
    R_tilde: np.ndarray
    K_rad: np.ndarray
    K_tan: np.ndarray
    mask: np.ndarray
    params: ModelParams
    floor: float
    sup_norms: dict = field(default_factory=dict)
    plateau: float | None = None
    verdict: str | None = None
    tips: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.params.n,
            "gauge_constant": gauge_constant(self.params),
            "floor": self.floor,
            "times": [float(t) for t in self.times],
            "sup_norms": {k: [float(v) for v in vals] for k, vals in self.sup_norms.items()},
            "plateau": self.plateau,
            "verdict": self.verdict,
            "tips": self.tips,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def save(self, outdir) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [outdir / "curvature.json"]
        paths[0].write_text(self.to_json(indent=2))
        for j in range(len(self.times)):
            path = outdir / f"curvature_{j:04d}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "Rtilde", "Krad", "Ktan"])
                for row in zip(self.x, self.R_tilde[j], self.K_rad[j], self.K_tan[j]):
                    w.writerow([repr(float(v)) for v in row])
            paths.append(path)
        return paths


def curvature_report(times, x, phis, dx: float, params: ModelParams, *,
                     floor: float = 0.05) -> CurvatureReport:
    """Curvature profiles per snapshot; sup-norms only over nodes with phi >= floor.

    Deep in the tips phi^{1-p} amplifies O(dx^2) errors without bound, so the
    tips are monitored in the polar frame instead.
    """
    phis = np.atleast_2d(np.asarray(phis, dtype=float))
    R = np.array([scalar_curvature_normalized(f, dx, params, form="log") for f in phis])
    KK = [sectional_curvatures(f, dx, params) for f in phis]
    Kr = np.array([k[0] for k in KK])
    Kt = np.array([k[1] for k in KK])
    mask = phis[:, 1:-1] >= floor

    def sup(a):
        return np.array([np.max(np.abs(r[mk])) if mk.any() else np.nan for r, mk in zip(a, mask)])

    tn = tensor_norm(Kr, Kt, params)
    norms = {"R_tilde": sup(R), "K_rad": sup(Kr), "K_tan": sup(Kt), "tensor": sup(tn),
             "K_max": np.maximum(sup(Kr), sup(Kt))}
    return CurvatureReport(np.asarray(times, dtype=float), np.asarray(x)[1:-1], R, Kr, Kt,
                           mask, params, floor, norms)


def type1_monitor(fld, params: ModelParams, *, floor: float = 0.05, early: float = 0.25,
                  factor: float = 2.0, ap=None, M: float = 5.0) -> CurvatureReport:
    """Bounded-curvature verdict for an evolution run.

    Pass iff the tensor-norm sup never exceeds ``factor`` times its plateau
    over the first ``early`` fraction of snapshots.  With ``ap`` supplied, the
    polar-frame bounds of both tips are recorded as well.
    """
    phis = fld.phi
    rep = curvature_report(fld.times, fld.x, phis, fld.dx, params, floor=floor)
    tn = rep.sup_norms["tensor"]
    n_early = max(1, int(np.ceil(early * len(tn))))
    rep.plateau = float(np.nanmax(tn[:n_early]))
    ok = bool(np.all(np.isfinite(tn))) and float(np.nanmax(tn)) <= factor * rep.plateau
    rep.verdict = "pass" if ok else "fail"
    if ap is not None:
        for t, f in zip(fld.times, phis):
            row = {"tau": float(t)}
            for side, lam, h in (("left", ap.lam, ap.h), ("right", ap.lam2, ap.h2)):
                try:
                    pf = polar_frame(fld.x, f, lam, h, t, M, params, side=side)
                    row[side] = pf.bounds(M)
                except DomainError:
                    row[side] = None
            rep.tips.append(row)
    return rep


def curvature_variation(rep: CurvatureReport, key: str = "tensor") -> float:
    """max - min of a sup-norm sequence (constancy check for controls)."""
    v = rep.sup_norms[key]
    return float(np.nanmax(v) - np.nanmin(v))
