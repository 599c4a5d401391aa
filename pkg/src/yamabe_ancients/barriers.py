"""Sub/supersolution pair for the five-parameter ancient solutions.

Pressure equation ``p u_tau = u u_xx - p/(p-1) u_x^2 + (p-1)(u^2 - u)`` and
its residual operator ``L``.  The upper barrier is the sum of two slowed
traveling waves and a cylinder; ``certify_supersolution`` samples ``L`` on a
space-time grid and turns the sign into a tolerance-based verdict.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .profiles import (
    ModelParams,
    WaveProfile,
    cylinder_blowup_time,
    cylinder_excess,
    solve_traveling_wave,
)

TOL_L = 1e-7


class BracketError(RuntimeError):
    """No sign change of w1 - w3 on the search interval."""


class CertificationFailure(RuntimeError):
    """No q up to the cap produced a passing certification."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class AncientParams:
    """Five shape parameters plus the supersolution margin q and horizon tau0."""

    lam: float
    lam2: float
    h: float = 0.0
    h2: float = 0.0
    k: float = 0.0
    q: float = 0.0
    tau0: float = -10.0
    certified: bool = False

    def __post_init__(self):
        if not (self.lam > 1.0 and self.lam2 > 1.0):
            raise ValueError("lambda and lambda' must both exceed 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.q < 0:
            raise ValueError("q must be >= 0")

    def reflected(self) -> "AncientParams":
        """Swap the left and right waves, (lam, h) <-> (lam2, h2)."""
        return replace(self, lam=self.lam2, lam2=self.lam, h=self.h2, h2=self.h)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class BarrierProfiles:
    """The model and the two solved waves a barrier needs."""

    model: ModelParams
    left: WaveProfile
    right: WaveProfile

    @classmethod
    def build(cls, ap: AncientParams, model: ModelParams, **solve_kw) -> "BarrierProfiles":
        w1 = solve_traveling_wave(ap.lam, model, **solve_kw)
        w2 = w1 if ap.lam2 == ap.lam else solve_traveling_wave(ap.lam2, model, **solve_kw)
        return cls(model, w1, w2)

    def matches(self, ap: AncientParams) -> bool:
        return self.left.lam == ap.lam and self.right.lam == ap.lam2

    @property
    def interp_rel_err(self) -> float:
        return max(self.left.interp_rel_err, self.right.interp_rel_err)


def slowed_time(tau, q, params: ModelParams):
    """tau (1 - q e^{((p-1)/p) tau}) and its tau-derivative."""
    tau = np.asarray(tau, dtype=float)
    e = np.exp(params.alpha * tau)
    return tau * (1.0 - q * e), 1.0 - q * e * (1.0 + params.alpha * tau)


@dataclass(frozen=True, eq=False)
class BarrierEval:
    """The three blocks of w+ and their derivatives at sampled (x, tau).

    Excesses are stored instead of values: ``a = w1 - 1``, ``b = w2``
    (``xi_k - 1``), ``c = w3 - 1``.
    """

    x: np.ndarray
    tau: np.ndarray
    z: np.ndarray
    zbar: np.ndarray
    a: np.ndarray
    a_x: np.ndarray
    a_xx: np.ndarray
    a_tau: np.ndarray
    b: np.ndarray
    b_tau: np.ndarray
    c: np.ndarray
    c_x: np.ndarray
    c_xx: np.ndarray
    c_tau: np.ndarray
    dtexp: np.ndarray  # d/dtau (tau e^{alpha tau})

    @property
    def w1(self):
        return 1.0 + self.a

    @property
    def w2(self):
        return self.b

    @property
    def w3(self):
        return 1.0 + self.c

    @property
    def wplus_excess(self):
        return self.a + self.b + self.c

    @property
    def wplus(self):
        return 1.0 + self.wplus_excess


def barrier_blocks(x, tau, ap: AncientParams, prof: BarrierProfiles) -> BarrierEval:
    """Evaluate w1, w2, w3 of the upper barrier with exact derivatives."""
    model = prof.model
    x, tau = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(tau, dtype=float))
    s, ds = slowed_time(tau, ap.q, model)
    z = x - ap.lam * s + ap.h
    zbar = -x - ap.lam2 * s + ap.h2
    e1 = prof.left.evaluate(z.ravel())
    e3 = prof.right.evaluate(zbar.ravel())
    sh = x.shape
    b = cylinder_excess(tau, ap.k, model)
    xi = 1.0 + b
    b_tau = model.alpha * xi * b
    et = np.exp(model.alpha * tau)
    return BarrierEval(
        x=x, tau=tau, z=z, zbar=zbar,
        a=e1.vex.reshape(sh), a_x=e1.dv.reshape(sh), a_xx=e1.d2v.reshape(sh),
        a_tau=(-ap.lam * ds) * e1.dv.reshape(sh),
        b=b, b_tau=b_tau,
        c=e3.vex.reshape(sh), c_x=-e3.dv.reshape(sh), c_xx=e3.d2v.reshape(sh),
        c_tau=(-ap.lam2 * ds) * e3.dv.reshape(sh),
        dtexp=et * (1.0 + model.alpha * tau),
    )


def upper_barrier(x, tau, ap: AncientParams, prof: BarrierProfiles):
    """w+ = w1 + w2 + w3 - 1 with the slowed wave positions."""
    return barrier_blocks(x, tau, ap, prof).wplus


def upper_barrier_excess(x, tau, ap: AncientParams, prof: BarrierProfiles):
    return barrier_blocks(x, tau, ap, prof).wplus_excess


def lower_barrier_excess(x, tau, ap: AncientParams, prof: BarrierProfiles):
    """w- - 1, where w- is the max of the three exact solutions."""
    model = prof.model
    x, tau = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(tau, dtype=float))
    a = prof.left.evaluate((x - ap.lam * tau + ap.h).ravel()).vex.reshape(x.shape)
    c = prof.right.evaluate((-x - ap.lam2 * tau + ap.h2).ravel()).vex.reshape(x.shape)
    b = cylinder_excess(tau, ap.k, model)
    return np.maximum(np.maximum(a, c), b)


def lower_barrier(x, tau, ap: AncientParams, prof: BarrierProfiles):
    return 1.0 + lower_barrier_excess(x, tau, ap, prof)


# ---------------------------------------------------------------------------
# the operator L


def pressure_operator(w, w_x, w_xx, w_tau, params: ModelParams):
    """L(w) = w w_xx - p/(p-1) w_x^2 + (p-1)(w^2 - w) - p w_tau, pointwise."""
    arrs = [np.asarray(t, dtype=float) for t in (w, w_x, w_xx, w_tau)]
    if not all(np.all(np.isfinite(t)) for t in arrs):
        raise FloatingPointError("non-finite input to the pressure operator")
    w, w_x, w_xx, w_tau = arrs
    p, pm1 = params.p, params.pm1
    return w * w_xx - (p / pm1) * w_x ** 2 + pm1 * (w * w - w) - p * w_tau


def pressure_operator_sampled(u, dx, dtau_field, params: ModelParams):
    """L on a sampled field: central differences in x, given u_tau.

    ``u`` is 1-D on a uniform grid; the result covers interior nodes.
    """
    u = np.asarray(u, dtype=float)
    ux = (u[2:] - u[:-2]) / (2.0 * dx)
    uxx = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx ** 2
    return pressure_operator(u[1:-1], ux, uxx, np.asarray(dtau_field)[1:-1], params)


def wave_operator(x, tau, lam, h, prof: WaveProfile, *, reflected=False):
    """L of a single exact traveling wave v(x - lam tau + h) (or its reflection)."""
    params = prof.params
    sgn = -1.0 if reflected else 1.0
    e = prof.evaluate(sgn * np.asarray(x, dtype=float) - lam * np.asarray(tau, dtype=float) + h)
    return pressure_operator(e.v, sgn * e.dv, e.d2v, -lam * e.dv, params)


def lw_terms(ev: BarrierEval, ap: AncientParams, params: ModelParams) -> dict:
    """The seven grouped terms of L(w+) once the block equations are used."""
    p, pm1 = params.p, params.pm1
    P = p / pm1
    a, b, c = ev.a, ev.b, ev.c
    return {
        "w3xx_cross": ev.c_xx * (a + b),
        "w1xx_cross": ev.a_xx * (c + b),
        "gradient_cross": -2.0 * P * ev.a_x * ev.c_x,
        "wave_product": 2.0 * pm1 * a * c,
        "cylinder_cross": 2.0 * pm1 * b * (a + c),
        "slow_left": -p * ap.q * ap.lam * ev.dtexp * ev.a_x,
        "slow_right": p * ap.q * ap.lam2 * ev.dtexp * ev.c_x,
    }


def barrier_operator(ev: BarrierEval, ap: AncientParams, params: ModelParams):
    """L(w+) by the grouped expansion and by direct assembly.

    Returns ``(grouped, direct, terms)``.
    """
    terms = lw_terms(ev, ap, params)
    grouped = sum(terms.values())
    w = ev.wplus
    direct = pressure_operator(
        w, ev.a_x + ev.c_x, ev.a_xx + ev.c_xx, ev.a_tau + ev.b_tau + ev.c_tau, params
    )
    return grouped, direct, terms


def operator_at(x, tau, ap: AncientParams, prof: BarrierProfiles):
    return barrier_operator(barrier_blocks(x, tau, ap, prof), ap, prof.model)[0]


# ---------------------------------------------------------------------------
# intersection point


@dataclass(frozen=True)
class Intersection:
    tau: float
    x: float
    x_predicted: float
    excess: float  # w1(x(tau), tau) - 1 = w3(x(tau), tau) - 1


def _log_gap(x, tau, ap, prof):
    ev = barrier_blocks(np.array([x]), np.array([tau]), ap, prof)
    return float(np.log(ev.a[0]) - np.log(ev.c[0]))


def intersection_predicted(tau, ap: AncientParams, prof: BarrierProfiles) -> float:
    g1, g2 = prof.left.tail_rate, prof.right.tail_rate
    p = prof.model.p
    return ((g1 - g2) / p) * tau + (
        math.log(prof.left.C / prof.right.C) + ap.h2 * g2 - ap.h * g1
    ) / (g1 + g2)


def intersection_point(tau: float, ap: AncientParams, prof: BarrierProfiles) -> Intersection:
    """Unique x with w1(x, tau) = w3(x, tau), by bracketed root finding."""
    s, _ = slowed_time(tau, ap.q, prof.model)
    s = float(s)
    lo = ap.lam * s - ap.h - 5.0
    hi = -ap.lam2 * s + ap.h2 + 5.0
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = _log_gap(lo, tau, ap, prof), _log_gap(hi, tau, ap, prof)
    if not (flo > 0 > fhi):
        raise BracketError(f"w1 - w3 has no sign change on [{lo:.4g}, {hi:.4g}] at tau={tau}")
    x = brentq(_log_gap, lo, hi, args=(tau, ap, prof), xtol=1e-13, rtol=1e-15, maxiter=500)
    ev = barrier_blocks(np.array([x]), np.array([tau]), ap, prof)
    return Intersection(float(tau), float(x), intersection_predicted(tau, ap, prof), float(ev.a[0]))


def decay_rate(ap: AncientParams, prof: BarrierProfiles) -> float:
    """d = (gamma gamma' + (p-1)) / p."""
    m = prof.model
    return (prof.left.tail_rate * prof.right.tail_rate + m.pm1) / m.p


def fitted_decay_rate(tau: float, ap: AncientParams, prof: BarrierProfiles, dt: float = 0.5):
    """Central-difference slope of log(w1(x(tau), tau) - 1) in tau."""
    up = intersection_point(tau + dt, ap, prof).excess
    dn = intersection_point(tau - dt, ap, prof).excess
    return (math.log(up) - math.log(dn)) / (2.0 * dt)


# ---------------------------------------------------------------------------
# certification


REGIONS = ("left_tip", "left_front", "left_tail", "right_tail", "right_front", "right_tip")


@dataclass
class CertificationReport:
    params: dict
    box: dict
    grid: dict
    maxL_global: float
    maxL_by_region: list
    dominant_term_margin: float
    error_estimate: float
    grouping_mismatch: float
    verdict: str
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


CERTIFICATION_SCHEMA = {
    "type": "object",
    "required": ["params", "box", "grid", "maxL_global", "maxL_by_region",
                 "dominant_term_margin", "verdict"],
    "properties": {
        "params": {"type": "object"},
        "box": {"type": "object"},
        "grid": {"type": "object"},
        "maxL_global": {"type": "number"},
        "maxL_by_region": {
            "type": "array",
            "items": {"type": "object", "required": ["region", "maxL"],
                      "properties": {"region": {"enum": list(REGIONS)},
                                     "maxL": {"type": ["number", "null"]}}},
        },
        "dominant_term_margin": {"type": ["number", "null"]},
        "verdict": {"enum": ["pass", "fail", "inconclusive"]},
    },
}


def default_region_width(prof: BarrierProfiles) -> float:
    return 10.0 / min(1.0, prof.left.tail_rate, prof.right.tail_rate)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("YAMABE_ANCIENTS_THREADS", "1")))
    except ValueError:
        return 1


def _tau_levels(tau_min, tau_max, n_tau):
    """Geometric spacing in |tau| (tau_max < 0)."""
    return -np.geomspace(-tau_min, -tau_max, n_tau)


def _certify_level(tau, ap, prof, M, dx, tip_depth, x_range, tol):
    model = prof.model
    s, _ = slowed_time(tau, ap.q, model)
    s = float(s)
    if x_range is None:
        xl = ap.lam * s - ap.h - tip_depth
        xr = -ap.lam2 * s + ap.h2 + tip_depth
    else:
        xl, xr = x_range
    nx = int(math.ceil((xr - xl) / dx)) + 1
    x = np.linspace(xl, xr, nx)
    ev = barrier_blocks(x, np.full_like(x, tau), ap, prof)
    grouped, direct, terms = barrier_operator(ev, ap, model)
    w = ev.wplus
    scale = np.maximum(1.0, w * w)
    Ls = grouped / scale
    abs_terms = sum(np.abs(t) for t in terms.values())
    p, pm1 = model.p, model.pm1
    big = (np.abs(w * (ev.a_xx + ev.c_xx)) + (p / pm1) * (ev.a_x + ev.c_x) ** 2
           + pm1 * w * w + p * np.abs(ev.a_tau + ev.b_tau + ev.c_tau))
    err = (prof.interp_rel_err * abs_terms + 1e-13 * abs_terms) / scale
    mismatch = np.abs(grouped - direct) / np.maximum(big, 1e-300)

    try:
        xc = intersection_point(tau, ap, prof).x
    except BracketError:
        xc = 0.5 * (xl + xr)
    left = x <= xc
    zz = np.where(left, ev.z, ev.zbar)
    tip, front = zz <= -M, (zz > -M) & (zz <= M)
    tail = zz > M
    masks = {
        "left_tip": left & tip, "left_front": left & front, "left_tail": left & tail,
        "right_tail": ~left & tail, "right_front": ~left & front, "right_tip": ~left & tip,
    }
    by_region = {}
    for name, mk in masks.items():
        if np.any(mk):
            i = int(np.argmax(np.where(mk, Ls, -np.inf)))
            by_region[name] = (float(Ls[i]), int(np.count_nonzero(mk)), float(x[i]), float(err[i]))
        else:
            by_region[name] = (None, 0, None, None)

    dom = np.where(left, terms["slow_left"], terms["slow_right"])
    rest = grouped - dom
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(dom) > 0, rest / np.abs(dom), np.inf)
    i = int(np.argmax(Ls))
    return {
        "tau": float(tau), "nx": nx, "maxL": float(Ls[i]), "x_at_max": float(x[i]),
        "err_at_max": float(err[i]), "err_max": float(err.max()),
        "lower_bound_max": float(np.max(Ls - err)),
        "upper_bound_max": float(np.max(Ls + err)),
        "regions": by_region, "dom_ratio": float(np.max(ratio)),
        "mismatch": float(mismatch.max()),
    }


def _finite_or_none(v):
    return float(v) if math.isfinite(v) else None


def certify_supersolution(
    ap: AncientParams,
    prof: BarrierProfiles,
    tau_min: float = -40.0,
    tau_max: float | None = None,
    *,
    n_tau: int = 48,
    dx: float | None = None,
    M: float | None = None,
    tip_depth: float | None = None,
    x_range: tuple[float, float] | None = None,
    tol: float = TOL_L,
) -> CertificationReport:
    """Sample L(w+) on a space-time grid and decide the sign.

    Values are scaled by ``max(1, w^2)``.  With ``err`` the interpolation error
    estimate, the verdict is ``pass`` if ``max(L + err) <= tol``, ``fail`` if
    ``max(L - err) > tol``, and ``inconclusive`` otherwise.
    """
    if not prof.matches(ap):
        raise ValueError("profiles were built for different wave speeds")
    model = prof.model
    tau_max = ap.tau0 if tau_max is None else tau_max
    if tau_max >= cylinder_blowup_time(ap.k, model) or tau_max >= 0:
        raise ValueError("certification box must stay at negative tau below the cylinder blow-up")
    gmin = min(prof.left.tail_rate, prof.right.tail_rate)
    dx = 0.02 / max(1.0, gmin) if dx is None else dx
    M = default_region_width(prof) if M is None else M
    tip_depth = M + 40.0 / model.pm1 if tip_depth is None else tip_depth
    taus = _tau_levels(tau_min, tau_max, n_tau)

    def run(t):
        return _certify_level(t, ap, prof, M, dx, tip_depth, x_range, tol)

    nthreads = _threads()
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            levels = list(pool.map(run, taus))
    else:
        levels = [run(t) for t in taus]

    worst = max(levels, key=lambda r: r["maxL"])
    upper = max(r["upper_bound_max"] for r in levels)
    lower = max(r["lower_bound_max"] for r in levels)
    if upper <= tol:
        verdict = "pass"
    elif lower > tol:
        verdict = "fail"
    else:
        verdict = "inconclusive"

    regions = []
    for name in REGIONS:
        vals = [(r["regions"][name], r["tau"]) for r in levels if r["regions"][name][0] is not None]
        if vals:
            (mx, _, xat, _), tat = max(vals, key=lambda v: v[0][0])
            regions.append({"region": name, "maxL": mx, "x": xat, "tau": tat,
                            "nodes": int(sum(v[0][1] for v in vals))})
        else:
            regions.append({"region": name, "maxL": None, "x": None, "tau": None, "nodes": 0})

    return CertificationReport(
        params={**ap.to_dict(), "n": model.n, "p": model.p},
        box={"tau_min": float(tau_min), "tau_max": float(tau_max),
             "x_range": list(x_range) if x_range else None, "tip_depth": tip_depth, "M": M},
        grid={"dx": dx, "n_tau": n_tau, "tau_spacing": "geometric in |tau|",
              "nodes": int(sum(r["nx"] for r in levels))},
        maxL_global=float(worst["maxL"]),
        maxL_by_region=regions,
        dominant_term_margin=_finite_or_none(max(r["dom_ratio"] for r in levels)),
        error_estimate=float(max(r["err_max"] for r in levels)),
        grouping_mismatch=float(max(r["mismatch"] for r in levels)),
        verdict=verdict,
        worst={"tau": worst["tau"], "x": worst["x_at_max"], "maxL": worst["maxL"],
               "err": worst["err_at_max"], "tol": tol},
    )


def find_q(
    ap: AncientParams,
    prof: BarrierProfiles,
    tau_min: float = -40.0,
    *,
    q_seed: float = 1e-2,
    q_cap: float = 1e4,
    q_floor: float = 1e-8,
    rel_digits: float = 0.01,
    **cert_kw,
):
    """Smallest q (to ~2 significant digits) for which the certification passes.

    Returns ``(certified_params, report)``.
    """
    cache = {}

    def cert(q):
        if q not in cache:
            cache[q] = certify_supersolution(replace(ap, q=q), prof, tau_min, **cert_kw)
        return cache[q]

    q = q_seed
    if cert(q).passed:
        hi = q
        lo = hi / 2.0
        while cert(lo).passed:
            hi, lo = lo, lo / 2.0
            if lo < q_floor:
                return replace(ap, q=hi, certified=True), cert(hi)
    else:
        lo = q
        hi = 2.0 * q
        while not cert(hi).passed:
            lo, hi = hi, 2.0 * hi
            if hi > q_cap:
                rep = cert(lo)
                raise CertificationFailure(
                    f"no q <= {q_cap} certifies; worst regions: {rep.maxL_by_region}", rep
                )
    while hi - lo > rel_digits * hi:
        mid = 0.5 * (lo + hi)
        if cert(mid).passed:
            hi = mid
        else:
            lo = mid
    return replace(ap, q=hi, certified=True), cert(hi)
