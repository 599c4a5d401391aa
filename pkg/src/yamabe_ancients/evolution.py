"""Approximating initial-value problems started from the upper barrier.

The flow is advanced in the conformal gauge, where
``(phi^p)_tau = phi_xx + phi^p - phi`` and ``phi`` lies in ``(0, 1]``.  The
stored variable is ``ln phi``: near the cylinder ``phi`` is within 1e-13 of 1
and the unstable constant mode would amplify the rounding of ``phi`` itself,
while in the tips ``phi`` falls below 1e-20.  ``ln phi`` keeps full relative
precision of both ``1 - phi`` and ``phi``.  The plain ``phi`` and pressure
``u = phi^{-(p-1)}`` gauges remain available as cross-checks.  Each step is
implicit Euler, solved by Newton with a tridiagonal Jacobian (see
:mod:`yamabe_ancients.kernels`).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .barriers import (
    AncientParams,
    BarrierProfiles,
    lower_barrier_excess,
    upper_barrier_excess,
)
from .kernels import backend_name, get_backend
from .profiles import ModelParams, WaveProfile, cylinder_excess, sphere_steady

# tracking error / (dtau + dx^2) measured on exact waves over 20-unit windows;
# see calibrate_sandwich_constant
C_SAND = 0.12


class ConfigError(ValueError):
    pass


class UncertifiedError(RuntimeError):
    pass


class NewtonFailure(RuntimeError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


# ---------------------------------------------------------------------------
# gauges


def phi_from_u(u, params: ModelParams):
    return np.asarray(u, dtype=float) ** (-1.0 / params.pm1)


def u_from_phi(phi, params: ModelParams):
    return np.asarray(phi, dtype=float) ** (-params.pm1)


def phi_from_excess(ex, params: ModelParams):
    """phi for u = 1 + ex, accurate when ex is tiny or huge."""
    return np.exp(-np.log1p(ex) / params.pm1)


def eps_from_excess(ex, params: ModelParams):
    """1 - phi for u = 1 + ex without cancellation."""
    return -np.expm1(-np.log1p(ex) / params.pm1)


GAUGES = ("logphi", "phi", "u")


def to_logphi(values, gauge: str, params: ModelParams):
    v = np.asarray(values, dtype=float)
    if gauge == "logphi":
        return v
    if gauge == "phi":
        return np.log(v)
    return -np.log(v) / params.pm1


def convert(values, src: str, dst: str, params: ModelParams):
    """Change gauge among 'logphi', 'phi' and 'u'."""
    if src == dst:
        return np.asarray(values, dtype=float)
    lg = to_logphi(values, src, params)
    if dst == "logphi":
        return lg
    if dst == "phi":
        return np.exp(lg)
    return np.exp(-params.pm1 * lg)


def from_excess(ex, gauge: str, params: ModelParams):
    """u = 1 + ex in the requested gauge."""
    if gauge == "u":
        return 1.0 + np.asarray(ex, dtype=float)
    lg = -np.log1p(ex) / params.pm1
    return lg if gauge == "logphi" else np.exp(lg)


# ---------------------------------------------------------------------------
# configuration and fields


@dataclass(frozen=True)
class EvolveConfig:
    m: float = 30.0
    tau_end: float = -10.0
    X: float = 80.0
    dx: float = 0.05
    dtau: float = 0.01
    newton_tol: float = 1e-12
    newton_max_iter: int = 30
    gauge: str = "logphi"
    snapshot_dt: float = 0.5
    max_halvings: int = 10
    backend: str | None = None

    def __post_init__(self):
        if self.gauge not in GAUGES:
            raise ConfigError("gauge must be 'logphi', 'phi' or 'u'")
        if not (self.dx > 0 and self.dtau > 0 and self.X > 0 and self.snapshot_dt > 0):
            raise ConfigError("dx, dtau, X and snapshot_dt must be positive")
        if not self.tau_end > -self.m:
            raise ConfigError("tau_end must exceed -m")

    @property
    def tau_start(self) -> float:
        return -float(self.m)

    @property
    def n_x(self) -> int:
        n = round(2 * self.X / self.dx)
        if abs(n * self.dx - 2 * self.X) > 1e-9 * self.X:
            raise ConfigError("2X must be an integer multiple of dx")
        return n + 1

    def grid(self) -> np.ndarray:
        return np.linspace(-self.X, self.X, self.n_x)

    def schedule(self) -> tuple[int, int, float]:
        """(number of steps, steps per snapshot, exact dtau)."""
        span = self.tau_end - self.tau_start
        n = max(1, round(span / self.dtau))
        dt = span / n
        stride = max(1, round(self.snapshot_dt / dt))
        return n, stride, dt

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class SpaceTimeField:
    """Snapshots ``values[j]`` of the solution at ``times[j]`` on grid ``x``."""

    x: np.ndarray
    times: np.ndarray
    values: np.ndarray
    gauge: str
    model: ModelParams
    dx: float
    dtau: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.times), len(self.x)):
            raise ConfigError("values must have shape (len(times), len(x))")

    @property
    def phi(self) -> np.ndarray:
        return convert(self.values, self.gauge, "phi", self.model)

    @property
    def eps(self) -> np.ndarray:
        """1 - phi, accurate near the cylinder."""
        if self.gauge == "phi":
            return 1.0 - self.values
        return -np.expm1(to_logphi(self.values, self.gauge, self.model))

    @property
    def u(self) -> np.ndarray:
        return convert(self.values, self.gauge, "u", self.model)

    @property
    def u_excess(self) -> np.ndarray:
        """u - 1, accurate near the cylinder."""
        if self.gauge == "u":
            return self.values - 1.0
        return np.expm1(-self.model.pm1 * to_logphi(self.values, self.gauge, self.model))

    def to_gauge(self, gauge: str) -> "SpaceTimeField":
        if gauge == self.gauge:
            return self
        return replace(self, values=convert(self.values, self.gauge, gauge, self.model),
                       gauge=gauge)

    def index(self, tau: float, atol: float = 1e-9) -> int:
        j = int(np.argmin(np.abs(self.times - tau)))
        if abs(self.times[j] - tau) > atol:
            raise KeyError(f"no snapshot at tau={tau}")
        return j

    def save_snapshots(self, outdir, every: int = 1) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        phi, u = self.phi, self.u
        for j in range(0, len(self.times), every):
            path = outdir / f"snapshot_{j:04d}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "u", "phi"])
                for row in zip(self.x, u[j], phi[j]):
                    w.writerow([repr(float(v)) for v in row])
            paths.append(path)
        return paths


def load_snapshots(rundir, model: ModelParams) -> SpaceTimeField:
    """Rebuild a conformal-gauge field from ``run.json`` + snapshot CSVs."""
    rundir = Path(rundir)
    meta = json.loads((rundir / "run.json").read_text())
    times = np.asarray(meta["snapshot_times"], dtype=float)
    rows = []
    x = None
    for j, _ in enumerate(times):
        data = np.loadtxt(rundir / f"snapshot_{j:04d}.csv", delimiter=",", skiprows=1)
        x = data[:, 0]
        rows.append(data[:, 2])
    cfg = meta["config"]
    return SpaceTimeField(x, times, np.array(rows), "phi", model, cfg["dx"], cfg["dtau"])


# ---------------------------------------------------------------------------
# stepping

Boundary = Callable[[float], tuple[float, float]]


def step(values, tau, dtau, dx, boundary: Boundary, model: ModelParams, *,
         gauge="logphi", tol=1e-12, maxit=30, max_halvings=10, backend=None, _depth=0):
    """Advance one implicit-Euler step from ``tau`` to ``tau + dtau``.

    ``boundary(t)`` returns the Dirichlet pair in the active gauge.  On Newton
    failure the step is split in two halves, recursively.
    Returns ``(values, newton_iterations)``.
    """
    kern = get_backend(backend)
    fn = {"logphi": kern.logphi_step, "phi": kern.conformal_step,
          "u": kern.pressure_step}[gauge]
    lo, hi = boundary(tau + dtau)
    new, its, ok = fn(values, lo, hi, dtau, dx, model.p, tol, maxit)
    if ok:
        return new, its
    if _depth >= max_halvings:
        raise NewtonFailure(
            f"Newton failed at tau={tau:.6g} after {max_halvings} halvings (dtau={dtau:.3g})",
            state={"tau": tau, "dtau": dtau, "values": np.asarray(values).tolist()},
        )
    kw = dict(gauge=gauge, tol=tol, maxit=maxit, max_halvings=max_halvings,
              backend=backend, _depth=_depth + 1)
    half = 0.5 * dtau
    mid, i1 = step(values, tau, half, dx, boundary, model, **kw)
    out, i2 = step(mid, tau + half, half, dx, boundary, model, **kw)
    return out, i1 + i2


def evolve_field(init, config: EvolveConfig, boundary: Boundary, model: ModelParams,
                 monitor: Callable | None = None) -> SpaceTimeField:
    """Generic driver: ``init`` at ``-config.m`` in the active gauge."""
    x = config.grid()
    vals = np.asarray(init, dtype=float).copy()
    if vals.shape != x.shape:
        raise ConfigError("initial data does not match the grid")
    n, stride, dt = config.schedule()
    tau = config.tau_start
    times, snaps = [tau], [vals.copy()]
    diag = {"tau": [], "newton_iters": [], "min": [], "max": []}
    mon = [] if monitor is not None else None
    if mon is not None:
        mon.append(monitor(tau, vals))
    for j in range(1, n + 1):
        vals, its = step(vals, tau, dt, config.dx, boundary, model, gauge=config.gauge,
                         tol=config.newton_tol, maxit=config.newton_max_iter,
                         max_halvings=config.max_halvings, backend=config.backend)
        tau = config.tau_start + j * dt
        diag["tau"].append(tau)
        diag["newton_iters"].append(its)
        diag["min"].append(float(vals.min()))
        diag["max"].append(float(vals.max()))
        if mon is not None:
            mon.append(monitor(tau, vals))
        if j % stride == 0 or j == n:
            times.append(tau)
            snaps.append(vals.copy())
    diag = {k: np.asarray(v) for k, v in diag.items()}
    if mon is not None:
        diag["monitor"] = np.asarray(mon)
    diag["backend"] = backend_name(get_backend(config.backend))
    return SpaceTimeField(x, np.asarray(times), np.array(snaps), config.gauge, model,
                          config.dx, dt, diag)


# ---------------------------------------------------------------------------
# the approximating problems u_m


def barrier_boundary(config: EvolveConfig, ap: AncientParams, prof: BarrierProfiles) -> Boundary:
    ends = np.array([-config.X, config.X])

    def bc(t):
        ex = upper_barrier_excess(ends, t, ap, prof)
        v = from_excess(ex, config.gauge, prof.model)
        return float(v[0]), float(v[1])

    return bc


def initialize(config: EvolveConfig, ap: AncientParams, prof: BarrierProfiles, *,
               allow_uncertified: bool = False) -> np.ndarray:
    """Sample w+ at tau = -m in the active gauge."""
    if not (ap.certified or allow_uncertified):
        raise UncertifiedError("parameters carry no certified q; run find_q first")
    if not -config.m < ap.tau0 or config.tau_end > ap.tau0 + 1e-12:
        raise ConfigError("need -m < tau_end <= tau0")
    ex = upper_barrier_excess(config.grid(), config.tau_start, ap, prof)
    return from_excess(ex, config.gauge, prof.model)


def sandwich_margins(tau, values, x, gauge, ap: AncientParams, prof: BarrierProfiles):
    """(max(w- - u)_+, max(u - w+)_+) measured in the conformal gauge.

    With phi decreasing in u the upper margin is ``max(phi(w+) - phi)_+`` and
    the lower one ``max(phi - phi(w-))_+``; both are evaluated on deficits.
    """
    model = prof.model
    eps = -np.expm1(to_logphi(values, gauge, model))
    eps_up = eps_from_excess(upper_barrier_excess(x, tau, ap, prof), model)
    eps_lo = eps_from_excess(lower_barrier_excess(x, tau, ap, prof), model)
    return float(max(0.0, np.max(eps_lo - eps))), float(max(0.0, np.max(eps - eps_up)))


def evolve(config: EvolveConfig, ap: AncientParams, prof: BarrierProfiles, *,
           allow_uncertified: bool = False, track_margins: bool = True) -> SpaceTimeField:
    """Solve u_m from w+(., -m) with Dirichlet data from w+ at x = +-X."""
    init = initialize(config, ap, prof, allow_uncertified=allow_uncertified)
    x = config.grid()
    monitor = None
    if track_margins:
        def monitor(t, v):
            return sandwich_margins(t, v, x, config.gauge, ap, prof)
    fld = evolve_field(init, config, barrier_boundary(config, ap, prof), prof.model, monitor)
    if track_margins:
        mon = fld.diagnostics.pop("monitor")
        fld.diagnostics["lower_margin"] = mon[:, 0]
        fld.diagnostics["upper_margin"] = mon[:, 1]
        fld.diagnostics["margin_tau"] = np.concatenate([[config.tau_start], fld.diagnostics["tau"]])
    fld.diagnostics["params"] = ap.to_dict()
    return fld


def _refined(config: EvolveConfig, level: int) -> EvolveConfig:
    """Same run at dtau/2^level with snapshots on the coarse snapshot times."""
    _, stride, dt = config.schedule()
    return replace(config, dtau=dt / 2 ** level, snapshot_dt=stride * dt)


def richardson(fields: list[SpaceTimeField]) -> SpaceTimeField:
    """Richardson table in dtau for a first-order scheme.

    ``fields[j]`` must use dtau/2^j on a common grid.  Two fields cancel the
    O(dtau) error; three cancel O(dtau^2) as well.  Values are combined in
    ``ln phi`` at the snapshot times of ``fields[0]``.
    """
    base = fields[0]
    for j, f in enumerate(fields[1:], 1):
        if f.x.shape != base.x.shape or not math.isclose(base.dtau, 2 ** j * f.dtau, rel_tol=1e-9):
            raise ConfigError("fields must halve the time step on a common grid")
    table = [f.to_gauge("logphi").values[[f.index(t) for t in base.times]] for f in fields]
    for k in range(1, len(fields)):
        table = [(2 ** k * table[j + 1] - table[j]) / (2 ** k - 1) for j in range(len(table) - 1)]
    d0 = base.diagnostics
    diag = {"richardson_levels": len(fields), "dtaus": [f.dtau for f in fields],
            "backend": d0.get("backend"), "params": d0.get("params")}
    for key in ("tau", "min", "max", "newton_iters"):
        if key in d0:
            diag[key] = d0[key]
    return SpaceTimeField(base.x, base.times.copy(), table[0], "logphi", base.model,
                          base.dx, base.dtau, diag)


def richardson_space(coarse: SpaceTimeField, fine: SpaceTimeField) -> SpaceTimeField:
    """Cancel the O(dx^2) error of two runs at dx and dx/2 (on the coarse grid)."""
    if not math.isclose(coarse.dx, 2 * fine.dx, rel_tol=1e-9) or fine.x.size != 2 * coarse.x.size - 1:
        raise ConfigError("fine run must halve dx on the same interval")
    lc = coarse.to_gauge("logphi").values
    lf = fine.to_gauge("logphi").values[[fine.index(t) for t in coarse.times]][:, ::2]
    diag = dict(coarse.diagnostics)
    diag["space_levels"] = 2
    diag["dxs"] = [coarse.dx, fine.dx]
    return SpaceTimeField(coarse.x, coarse.times.copy(), (4.0 * lf - lc) / 3.0, "logphi",
                          coarse.model, coarse.dx, coarse.dtau, diag)


def evolve_extrapolated(config: EvolveConfig, ap: AncientParams, prof: BarrierProfiles, *,
                        levels: int = 2, space_levels: int = 1,
                        allow_uncertified: bool = False) -> SpaceTimeField:
    """evolve at dtau, dtau/2, ... (``levels`` runs) and Richardson-extrapolate in time.

    ``space_levels=2`` repeats the whole time table at dx/2 and cancels the
    O(dx^2) error as well; the result lives on the coarse grid.
    """
    kw = dict(allow_uncertified=allow_uncertified, track_margins=False)
    if space_levels not in (1, 2):
        raise ConfigError("space_levels must be 1 or 2")
    fields = []
    for s in range(space_levels):
        cfg = replace(config, dx=config.dx / 2 ** s)
        fields.append(richardson([evolve(_refined(cfg, j), ap, prof, **kw)
                                  for j in range(levels)]))
    return fields[0] if space_levels == 1 else richardson_space(*fields)


def sandwich_tolerance(dx: float, dtau: float, C: float = C_SAND) -> float:
    return C * (dtau + dx * dx)


@dataclass
class SandwichReport:
    times: np.ndarray
    lower_margin: np.ndarray
    upper_margin: np.ndarray
    tol: float

    @property
    def max_lower(self) -> float:
        return float(self.lower_margin.max())

    @property
    def max_upper(self) -> float:
        return float(self.upper_margin.max())

    @property
    def passed(self) -> bool:
        return self.max_lower <= self.tol and self.max_upper <= self.tol

    def to_dict(self) -> dict:
        return {"tol_sand": self.tol, "max_lower_margin": self.max_lower,
                "max_upper_margin": self.max_upper, "passed": self.passed}


def sandwich_check(fld: SpaceTimeField, ap: AncientParams, prof: BarrierProfiles, *,
                   tol: float | None = None, C: float = C_SAND) -> SandwichReport:
    """Per-time sandwich margins; uses every step if evolve tracked them."""
    if tol is None:
        tol = sandwich_tolerance(fld.dx, fld.dtau, C)
    d = fld.diagnostics
    if "upper_margin" in d:
        return SandwichReport(d["margin_tau"], d["lower_margin"], d["upper_margin"], tol)
    lo, up = zip(*(sandwich_margins(t, v, fld.x, fld.gauge, ap, prof)
                   for t, v in zip(fld.times, fld.values)))
    return SandwichReport(fld.times, np.array(lo), np.array(up), tol)


# ---------------------------------------------------------------------------
# convergence in m


@dataclass
class CauchyReport:
    ms: tuple
    window: dict
    D: dict
    D_phi: dict

    @property
    def passed(self) -> bool:
        return self.D["23"] < self.D["12"]

    def to_dict(self) -> dict:
        return {"ms": list(self.ms), "window": self.window, "D": self.D,
                "D_phi": self.D_phi, "passed": self.passed}


def _sup_diff(fa: SpaceTimeField, fb: SpaceTimeField, t0, t1, X0, gauge):
    if fa.x.shape != fb.x.shape or not np.allclose(fa.x, fb.x, atol=1e-12):
        raise ConfigError("runs must share the spatial grid")
    if not math.isclose(fa.dtau, fb.dtau, rel_tol=1e-12):
        raise ConfigError("runs must share the time step")
    mask = np.abs(fa.x) <= X0
    A = fa.u_excess if gauge == "u" else fa.eps
    B = fb.u_excess if gauge == "u" else fb.eps
    out = 0.0
    for j, t in enumerate(fa.times):
        if t < t0 - 1e-9 or t > t1 + 1e-9:
            continue
        try:
            jb = fb.index(t)
        except KeyError:
            continue
        out = max(out, float(np.max(np.abs(A[j, mask] - B[jb, mask]))))
    return out


def cauchy_in_m(runs: list[SpaceTimeField], *, X0: float = 20.0, tau_end=None) -> CauchyReport:
    """Sup-differences D_ij between runs started at -m_1 > -m_2 > -m_3."""
    if len(runs) != 3:
        raise ConfigError("need exactly three runs")
    runs = sorted(runs, key=lambda f: -f.times[0])
    ms = tuple(float(-f.times[0]) for f in runs)
    t0 = runs[0].times[0]
    t1 = min(f.times[-1] for f in runs) if tau_end is None else tau_end
    D, Dp = {}, {}
    for a, b in ((0, 1), (1, 2), (0, 2)):
        key = f"{a + 1}{b + 1}"
        D[key] = _sup_diff(runs[a], runs[b], t0, t1, X0, "u")
        Dp[key] = _sup_diff(runs[a], runs[b], t0, t1, X0, "phi")
    return CauchyReport(ms, {"tau": [float(t0), float(t1)], "X0": X0}, D, Dp)


def cauchy_study(ms, config: EvolveConfig, ap: AncientParams, prof: BarrierProfiles, *,
                 levels: int = 4, space_levels: int = 2, X0: float = 20.0,
                 allow_uncertified: bool = False):
    """Run u_m for each m in ``ms`` and compare them on the common window.

    The unstable cylinder mode keeps every relative error it is handed, while
    the true differences between the u_m are ~1e-11 early in the window, so
    the defaults extrapolate to O(dtau^4 + dx^4).  Returns (report, runs).
    """
    runs = [evolve_extrapolated(replace(config, m=float(m)), ap, prof, levels=levels,
                                space_levels=space_levels, allow_uncertified=allow_uncertified)
            for m in ms]
    return cauchy_in_m(runs, X0=X0), runs


# ---------------------------------------------------------------------------
# exact-solution tracking


def _log_psi(wave: WaveProfile, y):
    ev = wave.evaluate(y)
    with np.errstate(divide="ignore"):  # the discarded branch may hit log(0)
        return np.where(ev.eps < 0.5, np.log1p(-ev.eps), np.log(ev.psi))


def exact_solution(kind: str, model: ModelParams, *, wave: WaveProfile | None = None,
                   lam=None, h=0.0, k=0.0):
    """ln phi(x, tau) of an exact solution.

    ``kind`` is 'cylinder', 'wave', 'reflected' or 'sphere'.
    """
    if kind == "cylinder":
        return lambda x, t: np.full_like(
            np.asarray(x, dtype=float), -math.log1p(float(cylinder_excess(t, k, model))) / model.pm1)
    if kind == "sphere":
        return lambda x, t: np.log(sphere_steady(np.asarray(x, dtype=float), model))
    if wave is None:
        raise ConfigError("wave profile required")
    lam = wave.lam if lam is None else lam
    if kind == "wave":
        return lambda x, t: _log_psi(wave, np.asarray(x, dtype=float) - lam * t + h)
    if kind == "reflected":
        return lambda x, t: _log_psi(wave, -np.asarray(x, dtype=float) - lam * t + h)
    raise ConfigError(f"unknown exact solution {kind!r}")


def track_exact(kind: str, config: EvolveConfig, model: ModelParams, *,
                extrapolate: int = 1, **kw) -> dict:
    """Evolve an exact solution with its own boundary data; report the sup error.

    With ``extrapolate = L > 1`` the run is repeated at dtau/2, ..., dtau/2^{L-1}
    and Richardson-combined, exactly as :func:`evolve_extrapolated` does.
    """
    sol = exact_solution(kind, model, **kw)
    x = config.grid()
    ends = np.array([-config.X, config.X])
    gauge = config.gauge

    def conv(v):
        return convert(v, "logphi", gauge, model)

    def bc(t):
        v = conv(sol(ends, t))
        return float(v[0]), float(v[1])

    init = conv(sol(x, config.tau_start))
    fld = richardson([evolve_field(init, _refined(config, j), bc, model)
                      for j in range(max(1, extrapolate))])
    err = 0.0
    for t, v in zip(fld.times, fld.phi):
        err = max(err, float(np.max(np.abs(v - np.exp(sol(x, t))))))
    return {"kind": kind, "dx": config.dx, "dtau": fld.dtau, "error": err, "field": fld}


def convergence_study(kind: str, config: EvolveConfig, model: ModelParams, *,
                      levels: int = 3, extrapolate: int = 1, **kw) -> dict:
    """Refine (dx, dtau) -> (dx/2, dtau/4) and report observed orders in dx.

    Nominal order is 2 in dx (equivalently 1 in dtau).
    """
    rows = []
    cfg = config
    for _ in range(levels):
        r = track_exact(kind, cfg, model, extrapolate=extrapolate, **kw)
        rows.append({"dx": r["dx"], "dtau": r["dtau"], "error": r["error"]})
        cfg = replace(cfg, dx=cfg.dx / 2, dtau=cfg.dtau / 4)
    orders = [math.log(rows[i]["error"] / rows[i + 1]["error"], 2) for i in range(levels - 1)]
    consts = [r["error"] / (r["dtau"] + r["dx"] ** 2) for r in rows]
    return {"kind": kind, "levels": rows, "orders": orders, "constants": consts}


def calibrate_sandwich_constant(model: ModelParams, wave: WaveProfile, *, window=20.0,
                                dx=0.05, dtau=0.01, X=40.0, safety=2.0,
                                extrapolate=2) -> float:
    """safety x the worst error/(dtau + dx^2) of exact-wave tracking over a window.

    The waves cross the origin mid-window, so both fronts sweep the grid.
    """
    cfg = EvolveConfig(m=window, tau_end=0.0, X=X, dx=dx, dtau=dtau, snapshot_dt=0.25)
    worst = 0.0
    for kind in ("wave", "reflected"):
        r = track_exact(kind, cfg, model, extrapolate=extrapolate, wave=wave,
                        h=-wave.lam * window / 2)
        worst = max(worst, r["error"] / (r["dtau"] + dx * dx))
    return safety * worst


# ---------------------------------------------------------------------------
# manifests


def run_manifest(fld: SpaceTimeField, config: EvolveConfig, ap: AncientParams, *,
                 sandwich: SandwichReport | None = None, files=None) -> dict:
    d = fld.diagnostics
    per_time = []
    for j, t in enumerate(d.get("tau", [])):
        row = {"tau": float(t), "min": float(d["min"][j]), "max": float(d["max"][j]),
               "newton_iters": int(d["newton_iters"][j])}
        if "upper_margin" in d:
            row["lower_margin"] = float(d["lower_margin"][j + 1])
            row["upper_margin"] = float(d["upper_margin"][j + 1])
        per_time.append(row)
    return {
        "tool": "yamabe-ancients",
        "version": __version__,
        "n": fld.model.n,
        "params": ap.to_dict(),
        "config": config.to_dict(),
        "backend": d.get("backend"),
        "snapshot_times": [float(t) for t in fld.times],
        "sandwich": None if sandwich is None else sandwich.to_dict(),
        "diagnostics": per_time,
        "files": [str(f) for f in (files or [])],
    }
