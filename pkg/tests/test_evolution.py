from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CERTIFIED
from yamabe_ancients.barriers import upper_barrier_excess
from yamabe_ancients.evolution import (
    GAUGES,
    ConfigError,
    EvolveConfig,
    NewtonFailure,
    SpaceTimeField,
    UncertifiedError,
    cauchy_in_m,
    convert,
    evolve,
    evolve_extrapolated,
    evolve_field,
    from_excess,
    initialize,
    load_snapshots,
    richardson,
    richardson_space,
    run_manifest,
    sandwich_check,
    sandwich_margins,
    sandwich_tolerance,
    step,
    track_exact,
)
from yamabe_ancients.profiles import ModelParams


@settings(max_examples=50, deadline=None)
@given(lg=st.floats(-60.0, 0.3), n=st.integers(3, 8),
       src=st.sampled_from(GAUGES), dst=st.sampled_from(GAUGES))
def test_gauge_round_trip(lg, n, src, dst):
    m = ModelParams(n)
    v = convert(np.array([lg]), "logphi", src, m)
    back = convert(convert(v, src, dst, m), dst, "logphi", m)
    # phi and u store 1 + O(l): relative precision of l is lost near phi = 1
    lossy = {src, dst} & {"phi", "u"}
    assert back[0] == pytest.approx(lg, rel=1e-12, abs=1e-15 if lossy else 0.0)


def test_from_excess_keeps_precision(model4):
    ex = np.array([1e-15, 1e-3, 1e20])
    lg = from_excess(ex, "logphi", model4)
    assert np.allclose(np.expm1(-model4.pm1 * lg), ex, rtol=1e-12)
    assert np.allclose(from_excess(ex, "phi", model4), np.exp(lg), rtol=1e-14)


def test_config_validation():
    with pytest.raises(ConfigError):
        EvolveConfig(gauge="w")
    with pytest.raises(ConfigError):
        EvolveConfig(m=10, tau_end=-20)
    with pytest.raises(ConfigError):
        EvolveConfig(X=1.0, dx=0.3).n_x
    cfg = EvolveConfig(m=20, tau_end=-10, dtau=0.03, snapshot_dt=1.0)
    n, stride, dt = cfg.schedule()
    assert n * dt == pytest.approx(10.0) and stride == round(1.0 / dt)
    assert cfg.grid()[0] == -cfg.X and cfg.grid().size == cfg.n_x


def test_initialize_requires_certificate(prof_sym):
    ap = replace(CERTIFIED["sym_k1"], certified=False)
    cfg = EvolveConfig(m=20, tau_end=-10, X=60)
    with pytest.raises(UncertifiedError):
        initialize(cfg, ap, prof_sym)
    with pytest.raises(ConfigError):
        initialize(replace(cfg, tau_end=-5), CERTIFIED["sym_k1"], prof_sym)
    lg = initialize(cfg, CERTIFIED["sym_k1"], prof_sym)
    ex = upper_barrier_excess(cfg.grid(), -20.0, CERTIFIED["sym_k1"], prof_sym)
    assert np.allclose(np.expm1(-2.0 * lg), ex, rtol=1e-12)


def test_margins_vanish_on_barrier(prof_sym):
    ap = CERTIFIED["sym_k1"]
    cfg = EvolveConfig(m=20, tau_end=-10, X=60)
    lg = initialize(cfg, ap, prof_sym)
    lo, up = sandwich_margins(-20.0, lg, cfg.grid(), "logphi", ap, prof_sym)
    assert lo == 0.0 and up == 0.0


def test_step_halves_then_fails(model4):
    x = np.linspace(-5, 5, 101)
    vals = np.full_like(x, -1e-3)

    def bc(t):
        return -1e-3, -1e-3

    # tol = 0 is never met: every split fails until the halving budget is gone
    with pytest.raises(NewtonFailure) as err:
        step(vals, 0.0, 0.01, 0.1, bc, model4, tol=0.0, maxit=2, max_halvings=2)
    assert err.value.state["dtau"] == pytest.approx(0.0025)
    out, its = step(vals, 0.0, 0.01, 0.1, bc, model4)
    assert its > 0 and np.all(out[1:-1] < vals[1:-1])


def test_cylinder_k0_is_exact(model4):
    cfg = EvolveConfig(m=5, tau_end=0, X=5, dx=0.1, dtau=0.05, snapshot_dt=1)
    r = track_exact("cylinder", cfg, model4, k=0.0)
    assert r["error"] == 0.0


@pytest.mark.parametrize("gauge", GAUGES)
def test_gauges_track_the_same_wave(gauge, model4, wave2):
    cfg = EvolveConfig(m=5, tau_end=0, X=25, dx=0.05, dtau=0.01, snapshot_dt=1, gauge=gauge)
    r = track_exact("wave", cfg, model4, wave=wave2, h=-5.0)
    # plain implicit Euler: phase lag ~ 3.5 dtau per unit time times |psi'|
    assert r["error"] < {"u": 0.03}.get(gauge, 0.01)


def test_richardson_cancels_linear_error(model4):
    x = np.linspace(0, 1, 5)
    times = np.array([0.0, 1.0])
    exact = np.log(np.array([[0.5] * 5, [0.6] * 5]))

    def fld(dt):
        return SpaceTimeField(x, times, exact + 3.0 * dt, "logphi", model4, 0.25, dt)

    out = richardson([fld(0.1), fld(0.05)])
    assert np.allclose(out.values, exact, atol=1e-14)
    with pytest.raises(ConfigError):
        richardson([fld(0.1), fld(0.08)])


def test_richardson_space_cancels_dx2(model4):
    times = np.array([0.0])
    xc, xf = np.linspace(0, 1, 5), np.linspace(0, 1, 9)

    def fld(x, dx):
        return SpaceTimeField(x, times, (np.sin(x) + 2.0 * dx * dx)[None, :], "logphi",
                              model4, dx, 0.1)

    out = richardson_space(fld(xc, 0.25), fld(xf, 0.125))
    assert np.allclose(out.values[0], np.sin(xc), atol=1e-14)


def test_evolve_snapshot_round_trip(tmp_path, prof_sym):
    ap = CERTIFIED["sym_k1"]
    cfg = EvolveConfig(m=14, tau_end=-10, X=50, dx=0.1, dtau=0.02, snapshot_dt=1.0)
    fld = evolve(cfg, ap, prof_sym)
    d = fld.diagnostics
    assert d["backend"] in ("python", "compiled")
    assert len(d["upper_margin"]) == len(d["tau"]) + 1
    files = fld.save_snapshots(tmp_path)
    man = run_manifest(fld, cfg, ap, sandwich=sandwich_check(fld, ap, prof_sym), files=files)
    (tmp_path / "run.json").write_text(json.dumps(man))
    back = load_snapshots(tmp_path, prof_sym.model)
    assert np.allclose(back.phi, fld.phi, rtol=1e-15, atol=0)
    assert man["snapshot_times"][0] == -14.0 and len(man["diagnostics"]) == len(d["tau"])
    header = files[0].read_text().splitlines()[0]
    assert header == "x,u,phi"


def test_extrapolated_run_stays_in_sandwich(prof_sym):
    ap = CERTIFIED["sym_k1"]
    cfg = EvolveConfig(m=16, tau_end=-10, X=50, dx=0.05, dtau=0.01, snapshot_dt=0.5)
    fld = evolve_extrapolated(cfg, ap, prof_sym, levels=2)
    assert fld.diagnostics["richardson_levels"] == 2
    rep = sandwich_check(fld, ap, prof_sym)
    assert rep.tol == pytest.approx(sandwich_tolerance(0.05, 0.01))
    assert rep.passed


def test_cauchy_needs_three_runs_on_one_grid(model4):
    x = np.linspace(0, 1, 3)
    f = SpaceTimeField(x, np.array([-20.0]), np.zeros((1, 3)), "logphi", model4, 0.5, 0.1)
    with pytest.raises(ConfigError):
        cauchy_in_m([f, f])
    g = SpaceTimeField(np.linspace(0, 2, 3), np.array([-30.0, -20.0]), np.zeros((2, 3)),
                       "logphi", model4, 1.0, 0.1)
    with pytest.raises(ConfigError):
        cauchy_in_m([f, g, g])
