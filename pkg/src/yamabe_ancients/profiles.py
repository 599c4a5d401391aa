"""Special solutions of the rescaled cylindrical Yamabe flow.

Conformal gauge ``(phi^p)_tau = phi_xx + phi^p - phi`` and pressure gauge
``u = phi^{-(p-1)}``.  This module holds the closed forms (Barenblatt wave,
cylinders, round sphere, King solutions) and the shooting solver for the
traveling-wave solitons ``psi_lambda`` with ``lambda > 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq


class DomainError(ValueError):
    """Input outside the regime where a formula or solver is defined."""


class BlowUpError(ValueError):
    """Evaluation at or beyond the blow-up time of a cylinder solution."""


class ShootingError(RuntimeError):
    """The traveling-wave shooting left the admissible band 0 < psi < 1."""


class AsymptoticsFitError(RuntimeError):
    """The right-tail plateau used to fit C_lambda is not flat enough."""


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``n >= 3`` and the derived exponents.

    ``p = (n+2)/(n-2)`` and ``pm1 = 4/(n-2)`` are kept as exact fractions in
    ``p_exact``/``pm1_exact``; the float attributes are what the numerics use.
    """

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise DomainError(f"dimension must be an integer >= 3, got {self.n!r}")

    @property
    def p_exact(self) -> Fraction:
        return Fraction(self.n + 2, self.n - 2)

    @property
    def pm1_exact(self) -> Fraction:
        return Fraction(4, self.n - 2)

    @property
    def p(self) -> float:
        return float(self.p_exact)

    @property
    def pm1(self) -> float:
        return float(self.pm1_exact)

    @property
    def alpha(self) -> float:
        """Cylinder growth rate (p-1)/p."""
        return float(self.pm1_exact / self.p_exact)

    @property
    def m(self) -> float:
        """(n-2)/2 = 2/(p-1); converts the normalized x to the geometric one."""
        return (self.n - 2) / 2.0

    @property
    def beta(self) -> float:
        """(n-2)^2/4, the zeroth-order coefficient scaled to 1 by x -> m x."""
        return (self.n - 2) ** 2 / 4.0


# ---------------------------------------------------------------------------
# exponents and closed forms


def gamma_roots(lam: float, params: ModelParams) -> tuple[float, float]:
    """Both roots of ``g^2 - lam*p*g + (p-1) = 0``, smaller first."""
    if not lam >= 1.0:
        raise DomainError(f"lambda must be >= 1, got {lam!r}")
    p, pm1 = params.p, params.pm1
    disc = (lam * p) ** 2 - 4.0 * pm1
    s = math.sqrt(max(disc, 0.0))
    big = 0.5 * (lam * p + s)
    # small root via the product to avoid cancellation at large lambda
    return pm1 / big, big


def gamma_exponent(lam: float, params: ModelParams) -> float:
    """Right-tail decay exponent gamma_lambda (the smaller root).

    At ``lam == 1`` this is still the smaller root; the Barenblatt profile
    realizes the exponent ``p - 1`` instead, which ``WaveProfile.tail_rate``
    records for the closed-form case.
    """
    return gamma_roots(lam, params)[0]


def barenblatt_constant(params: ModelParams) -> float:
    """c_p = 2^{p-1} - 1, fixed by psi_1(0) = 1/2."""
    return math.expm1(params.pm1 * math.log(2.0))


def barenblatt(y, params: ModelParams):
    """Pressure of the lambda = 1 wave, ``v_1(y) = 1 + c_p exp(-(p-1) y)``."""
    y = np.asarray(y, dtype=float)
    return 1.0 + barenblatt_constant(params) * np.exp(-params.pm1 * y)


def barenblatt_psi(y, params: ModelParams):
    """Conformal factor of the lambda = 1 wave, ``v_1^{-1/(p-1)}``."""
    y = np.asarray(y, dtype=float)
    cp = barenblatt_constant(params)
    return np.exp(-np.log1p(cp * np.exp(-params.pm1 * y)) / params.pm1)


def _cyl_arg(tau, k, params):
    tau = np.asarray(tau, dtype=float)
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k!r}")
    s = k * np.exp(params.alpha * tau)
    if np.any(s >= 1.0):
        raise BlowUpError(
            f"cylinder xi_k blows up at tau = {math.log(1.0 / k) / params.alpha:.6g}"
        )
    return s


def cylinder(tau, k: float, params: ModelParams):
    """xi_k(tau) = 1 / (1 - k exp(((p-1)/p) tau))."""
    return 1.0 / (1.0 - _cyl_arg(tau, k, params))


def cylinder_excess(tau, k: float, params: ModelParams):
    """xi_k - 1, accurate when it is tiny."""
    s = _cyl_arg(tau, k, params)
    return s / (1.0 - s)


def cylinder_blowup_time(k: float, params: ModelParams) -> float:
    return math.inf if k == 0 else math.log(1.0 / k) / params.alpha


def sphere_steady(x, params: ModelParams):
    """Round-sphere steady state ``A sech^m(x/m)`` of phi_xx + phi^p - phi = 0."""
    x = np.asarray(x, dtype=float)
    m = params.m
    amp = (params.n / (params.n - 2.0)) ** (1.0 / params.pm1)
    return amp / np.cosh(x / m) ** m


def sphere_steady_xx(x, params: ModelParams):
    x = np.asarray(x, dtype=float)
    m = params.m
    phi = sphere_steady(x, params)
    t = np.tanh(x / m)
    # d2/dx2 of A sech^m(x/m) = phi * (tanh^2 - sech^2/m)
    return phi * (t * t - (1.0 - t * t) / m)


# ---------------------------------------------------------------------------
# traveling waves


class ProfileEval(NamedTuple):
    """Pointwise data of a wave profile; every field is accurate in relative terms."""

    psi: np.ndarray
    eps: np.ndarray  # 1 - psi
    dpsi: np.ndarray
    d2psi: np.ndarray
    vex: np.ndarray  # v - 1
    dv: np.ndarray
    d2v: np.ndarray

    @property
    def v(self):
        return 1.0 + self.vex


@dataclass(frozen=True, eq=False)
class WaveProfile:
    """A solved traveling wave psi_lambda with psi(0) = 1/2.

    Evaluation goes through cubic Hermite interpolation of ``log psi`` (for
    y < 0) and ``log(1 - psi)`` (for y >= 0), both with exact slopes from the
    integrator.  Second derivatives come from the ODE itself.  Outside the
    grid the analytic tails ``A e^y`` and ``C e^{-rate*y}`` take over.
    """

    lam: float
    params: ModelParams
    gamma: float
    C: float
    tail_rate: float
    y: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    eps: np.ndarray
    closed_form: bool = False
    tail_ok: bool = True
    interp_rel_err: float = 0.0
    left_amp: float = 1.0
    _split: float = 0.0
    _left: object = field(default=None, repr=False)
    _right: object = field(default=None, repr=False)

    @property
    def v(self) -> np.ndarray:
        return np.exp(-self.params.pm1 * np.log(self.psi))

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    def _logs(self, y):
        """(log psi, dlog psi/dy, log eps, ...) assembled piecewise."""
        y = np.asarray(y, dtype=float)
        lpsi = np.empty_like(y)
        r1 = np.empty_like(y)  # psi'/psi
        eps = np.empty_like(y)
        dpsi = np.empty_like(y)
        if self.closed_form:
            pm1 = self.params.pm1
            cp = barenblatt_constant(self.params)
            e = cp * np.exp(-pm1 * y)
            lpsi = -np.log1p(e) / pm1
            r1 = e / (1.0 + e)
            eps = -np.expm1(lpsi)
            dpsi = np.exp(lpsi) * r1
            return lpsi, r1, eps, dpsi
        y0, y1 = self.y[0], self.y[-1]
        left = y < self._split
        lo = left & (y < y0)
        li = left & ~lo
        ri = ~left & (y <= y1)
        ro = ~left & (y > y1)
        if np.any(lo):
            lpsi[lo] = math.log(self.left_amp) + y[lo]
            r1[lo] = 1.0
        if np.any(li):
            lpsi[li] = self._left(y[li])
            r1[li] = self._left(y[li], 1)
        if np.any(lo | li):
            sel = lo | li
            eps[sel] = -np.expm1(lpsi[sel])
            dpsi[sel] = np.exp(lpsi[sel]) * r1[sel]
        if np.any(ri | ro):
            le = np.empty(int(np.count_nonzero(ri | ro)))
            dle = np.empty_like(le)
            sub = y[ri | ro]
            inn = sub <= y1
            if np.any(inn):
                le[inn] = self._right(sub[inn])
                dle[inn] = self._right(sub[inn], 1)
            if np.any(~inn):
                le[~inn] = math.log(self.C) - self.tail_rate * sub[~inn]
                dle[~inn] = -self.tail_rate
            e = np.exp(le)
            eps[ri | ro] = e
            dpsi[ri | ro] = -e * dle
            lp = np.log1p(-e)
            lpsi[ri | ro] = lp
            r1[ri | ro] = -e * dle / np.exp(lp)
        return lpsi, r1, eps, dpsi

    def evaluate(self, y) -> ProfileEval:
        """psi, its derivatives, and the pressure v = psi^{-(p-1)} with derivatives."""
        p, pm1, lam = self.params.p, self.params.pm1, self.lam
        lpsi, r1, eps, dpsi = self._logs(y)
        psi = np.exp(lpsi)
        pw = pm1 * lpsi
        # psi''/psi from the ODE psi'' + lam p psi^{p-1} psi' + psi^p - psi = 0
        r2 = -lam * p * np.exp(pw) * r1 - np.expm1(pw)
        vex = np.expm1(-pw)
        v = 1.0 + vex
        dv = -pm1 * v * r1
        d2v = pm1 * v * (p * r1 * r1 - r2)
        return ProfileEval(psi, eps, dpsi, psi * r2, vex, dv, d2v)

    def psi_at(self, y):
        return np.exp(self._logs(y)[0])

    def v_at(self, y):
        return np.exp(-self.params.pm1 * self._logs(y)[0])

    # -- serialization -----------------------------------------------------

    def metadata(self) -> dict:
        return {
            "lambda": self.lam,
            "p": self.params.p,
            "n": self.params.n,
            "gamma": self.gamma,
            "C": self.C,
            "tail_rate": self.tail_rate,
            "closed_form": self.closed_form,
            "tail_ok": self.tail_ok,
            "ygrid": {"min": float(self.y[0]), "max": float(self.y[-1]), "dy": self.dy},
        }

    def save(self, prefix) -> tuple[Path, Path]:
        """Write ``<prefix>.csv`` (y,psi,v) and the ``<prefix>.json`` sidecar."""
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        csv_path = prefix.with_suffix(".csv")
        json_path = prefix.with_suffix(".json")
        data = np.column_stack([self.y, self.psi, self.v])
        np.savetxt(csv_path, data, delimiter=",", header="y,psi,v", comments="", fmt="%.17g")
        json_path.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def load_profile(prefix, *, check: bool = True) -> WaveProfile:
    """Rebuild a profile from its sidecar by re-solving; optionally check the CSV."""
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    params = ModelParams(int(meta["n"]))
    g = meta["ygrid"]
    prof = solve_traveling_wave(
        meta["lambda"], params, ymin=g["min"], ymax=g["max"], dy=g["dy"],
        strict_tail=bool(meta.get("tail_ok", True)),
    )
    if check:
        data = np.loadtxt(prefix.with_suffix(".csv"), delimiter=",", skiprows=1)
        if data.shape[0] != prof.y.size or np.max(np.abs(data[:, 1] - prof.psi)) > 1e-9:
            raise ValueError(f"{prefix}.csv does not match the re-solved profile")
    return prof


def _grid(ymin, ymax, dy):
    npts = int(math.ceil((ymax - ymin) / dy - 1e-9)) + 1
    return ymin + dy * np.arange(npts)


def barenblatt_profile(params: ModelParams, ymin=-30.0, ymax=30.0, dy=0.01) -> WaveProfile:
    """The lambda = 1 closed form packaged as a WaveProfile."""
    y = _grid(ymin, ymax, dy)
    pm1 = params.pm1
    cp = barenblatt_constant(params)
    e = cp * np.exp(-pm1 * y)
    lpsi = -np.log1p(e) / pm1
    psi = np.exp(lpsi)
    return WaveProfile(
        lam=1.0, params=params, gamma=gamma_exponent(1.0, params), C=cp / pm1,
        tail_rate=pm1, y=y, psi=psi, dpsi=psi * e / (1.0 + e), eps=-np.expm1(lpsi),
        closed_form=True, left_amp=cp ** (-1.0 / pm1),
    )


def _wave_rhs_psi(lam, p, pm1):
    def f(_, s):
        psi, dpsi = s
        return [dpsi, -lam * p * psi ** pm1 * dpsi - psi ** p + psi]

    return f


def _wave_rhs_eps(lam, p, pm1):
    def f(_, s):
        e, de = s
        lp = math.log1p(-e) if e < 1.0 else -math.inf
        return [de, -lam * p * math.exp(pm1 * lp) * de + math.exp(lp) * math.expm1(pm1 * lp)]

    return f


def _hit_half(_, s):
    return s[0] - 0.5


_hit_half.terminal = True
_hit_half.direction = 1


def _leave_band(_, s):
    return s[0]


_leave_band.terminal = True
_leave_band.direction = -1


def solve_traveling_wave(
    lam: float,
    params: ModelParams,
    ymin: float = -30.0,
    ymax: float | None = None,
    dy: float = 0.01,
    *,
    seed: float = 1e-8,
    rtol: float = 1e-12,
    strict_tail: bool = True,
) -> WaveProfile:
    """Shoot the wave ``psi'' + lam p psi^{p-1} psi' + psi^p - psi = 0``.

    The seed ``psi = psi' = seed`` sits on the linearized unstable manifold
    of psi = 0.  A first pass locates where psi reaches 1/2; the second pass
    starts at ``ymin`` with the amplitude that puts that crossing at y = 0.
    Past the crossing the integration continues in ``eps = 1 - psi`` so the
    right tail keeps full relative precision.
    """
    if lam == 1.0:
        return barenblatt_profile(params, ymin, 30.0 / params.pm1 if ymax is None else ymax, dy)
    if not lam > 1.0:
        raise DomainError(f"lambda must be >= 1, got {lam!r}")
    gamma = gamma_exponent(lam, params)
    if ymax is None:
        ymax = 30.0 / gamma
    p, pm1 = params.p, params.pm1
    opts = dict(method="DOP853", rtol=rtol, atol=1e-300)
    fpsi = _wave_rhs_psi(lam, p, pm1)

    probe = solve_ivp(fpsi, (0.0, 200.0), [seed, seed], events=[_hit_half, _leave_band], **opts)
    if probe.status != 1 or len(probe.t_events[0]) == 0:
        raise ShootingError(
            f"psi never reached 1/2 (lambda={lam}, seed={seed}, last y={probe.t[-1]:.4g}, "
            f"psi={probe.y[0, -1]:.4g}, steps={probe.t.size})"
        )
    s_half = float(probe.t_events[0][0])

    y_start = ymin - 1.0
    amp = seed * math.exp(y_start + s_half)
    left = solve_ivp(fpsi, (y_start, 50.0), [amp, amp], events=[_hit_half, _leave_band],
                     dense_output=True, **opts)
    if len(left.t_events[0]) == 0:
        raise ShootingError(f"second pass missed psi = 1/2 (lambda={lam}, amp={amp:.3g})")
    y_half = float(left.t_events[0][0])
    dpsi_half = float(left.y_events[0][0][1])

    def exits_band(_, s):
        return s[0]

    exits_band.terminal = True
    exits_band.direction = -1
    right = solve_ivp(_wave_rhs_eps(lam, p, pm1), (y_half, y_half + ymax + 1.0),
                      [0.5, -dpsi_half], events=[exits_band], dense_output=True, **opts)
    if right.status != 0:
        raise ShootingError(
            f"psi left (0,1) at y={right.t[-1] - y_half:.4g} (lambda={lam}, seed={seed})"
        )

    y = _grid(ymin, ymax, dy)
    s = y + y_half
    split = y[np.argmin(np.abs(y))]
    lmask = y <= split
    rmask = y >= split
    sl = left.sol(s[lmask])
    sr = right.sol(s[rmask])
    psi = np.empty_like(y)
    dpsi = np.empty_like(y)
    eps = np.empty_like(y)
    psi[lmask], dpsi[lmask] = sl[0], sl[1]
    eps[lmask] = 1.0 - sl[0]
    eps[rmask], dpsi[rmask] = sr[0], -sr[1]
    psi[rmask] = 1.0 - sr[0]
    if np.any(psi <= 0) or np.any(eps <= 0) or np.any(dpsi <= 0):
        raise ShootingError(f"profile not strictly monotone in (0,1) (lambda={lam})")

    yl, yr = y[lmask], y[rmask]
    left_spline = CubicHermiteSpline(yl, np.log(psi[lmask]), dpsi[lmask] / psi[lmask])
    right_spline = CubicHermiteSpline(yr, np.log(eps[rmask]), -dpsi[rmask] / eps[rmask])

    # interpolation error at cell midpoints against the integrator's dense output
    ml = 0.5 * (yl[1:] + yl[:-1])
    mr = 0.5 * (yr[1:] + yr[:-1])
    err_l = np.abs(left_spline(ml) - np.log(left.sol(ml + y_half)[0]))
    err_r = np.abs(right_spline(mr) - np.log(right.sol(mr + y_half)[0]))
    interp_err = float(max(err_l.max(), err_r.max()))

    # plateau of (1 - psi) e^{gamma y} over the last quarter of the grid
    nwin = max(8, y.size // 4)
    g = np.log(eps[-nwin:]) + gamma * y[-nwin:]
    slope = np.gradient(g, dy)
    flat = float(np.max(np.abs(slope))) < 1e-4
    if not flat and strict_tail:
        raise AsymptoticsFitError(
            f"tail (1-psi)e^(gamma y) not flat: max |slope| = {np.max(np.abs(slope)):.3g} "
            f"over y in [{y[-nwin]:.3g}, {y[-1]:.3g}]; enlarge ymax"
        )
    C = float(math.exp(np.median(g)))

    return WaveProfile(
        lam=float(lam), params=params, gamma=gamma, C=C, tail_rate=gamma, y=y, psi=psi,
        dpsi=dpsi, eps=eps, tail_ok=flat, interp_rel_err=interp_err,
        left_amp=float(psi[0] * math.exp(-y[0])), _split=float(split),
        _left=left_spline, _right=right_spline,
    )


def locate_half(profile: WaveProfile) -> float:
    """Root of psi(y) = 1/2 found by bisection on the interpolant."""
    return brentq(lambda t: float(profile.psi_at(np.array([t]))[0]) - 0.5, -5.0, 5.0, xtol=1e-14)


# ---------------------------------------------------------------------------
# King solutions


@dataclass(frozen=True)
class KingState:
    xi: float
    zeta: float
    tau: float


@dataclass(frozen=True, eq=False)
class KingTrajectory:
    tau: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    blew_up: bool
    sol: object = field(repr=False, default=None)

    @property
    def final(self) -> KingState:
        return KingState(float(self.xi[-1]), float(self.zeta[-1]), float(self.tau[-1]))


def king_rhs(xi, zeta, params: ModelParams):
    """(xi', zeta') of the King system in the cylindrical pressure chart."""
    p, pm1 = params.p, params.pm1
    dxi = (p * pm1 * zeta ** 2 + pm1 * (xi ** 2 - xi)) / p
    dzeta = pm1 * zeta * (-1.0 + (p + 1.0) * xi) / p
    return dxi, dzeta


def king_ode_integrate(
    state: KingState,
    tau_end: float,
    params: ModelParams,
    *,
    xi_cap: float = 1e8,
    rtol: float = 1e-12,
    n_out: int = 401,
) -> KingTrajectory:
    """Integrate the King system from ``state`` to ``tau_end`` (either direction).

    Internally uses ``eta = xi - 1`` so the approach to the fixed point (1, 0)
    keeps relative precision.  Crossing ``xi_cap`` stops the run with
    ``blew_up = True``.
    """
    if state.xi < 1.0 or state.zeta < 0.0:
        raise DomainError("King state needs xi >= 1 and zeta >= 0")
    p, pm1 = params.p, params.pm1

    def f(_, s):
        eta, zeta = s
        xi = 1.0 + eta
        return [(p * pm1 * zeta * zeta + pm1 * eta * xi) / p,
                pm1 * zeta * (p + (p + 1.0) * eta) / p]

    def cap(_, s):
        return s[0] + 1.0 - xi_cap

    cap.terminal = True
    sol = solve_ivp(f, (state.tau, tau_end), [state.xi - 1.0, state.zeta], method="DOP853",
                    rtol=rtol, atol=1e-300, events=[cap], dense_output=True)
    blew = sol.status == 1
    t1 = sol.t[-1]
    taus = np.linspace(state.tau, t1, n_out)
    vals = sol.sol(taus)
    return KingTrajectory(taus, 1.0 + vals[0], vals[1], blew, sol)


def king_ode_step(state: KingState, dtau: float, params: ModelParams) -> KingState:
    return king_ode_integrate(state, state.tau + dtau, params, n_out=2).final


def king_excess(traj: KingTrajectory, tau):
    """xi - 1 from the dense solution, without cancellation."""
    return traj.sol.sol(np.asarray(tau, dtype=float))[0]


def king_slopes(traj: KingTrajectory, window: tuple[float, float]) -> dict:
    """Least-squares slopes of log(xi - 1) and log(zeta) over a tau window."""
    lo, hi = sorted(window)
    taus = np.linspace(lo, hi, 201)
    vals = traj.sol.sol(taus)
    s_xi = np.polyfit(taus, np.log(vals[0]), 1)[0]
    s_zeta = np.polyfit(taus, np.log(vals[1]), 1)[0]
    return {"xi_slope": float(s_xi), "zeta_slope": float(s_zeta)}


def king_closed_form(r, a: float, b: float, params: ModelParams):
    """Radial King conformal factor (a / (1 + 2 b r^2 + r^4))^{(n-2)/4}."""
    den = _king_den(r, b)
    if a <= 0:
        raise DomainError("King coefficient a must be positive")
    return (a / den) ** ((params.n - 2) / 4.0)


def king_pressure(r, a: float, b: float, params: ModelParams):
    """The degree-four pressure polynomial (1 + 2 b r^2 + r^4) / a."""
    return _king_den(r, b) / a


def _king_den(r, b):
    r = np.asarray(r, dtype=float)
    den = 1.0 + 2.0 * b * r * r + r ** 4
    if np.any(den <= 0):
        raise DomainError("1 + 2 b r^2 + r^4 must stay positive")
    return den
