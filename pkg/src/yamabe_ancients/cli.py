"""Command-line front end: ``yamabe-ancients <command> ...``.

Every command prints a JSON run manifest on stdout.  Exit codes:
0 pass, 1 verified failure, 2 usage/configuration error, 3 inconclusive.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .barriers import (
    AncientParams,
    BarrierProfiles,
    CertificationFailure,
    certify_supersolution,
    find_q,
)
from .evolution import (
    ConfigError,
    EvolveConfig,
    GAUGES,
    cauchy_study,
    evolve,
    evolve_extrapolated,
    load_snapshots,
    run_manifest,
    sandwich_check,
)
from .geometry import type1_monitor
from .profiles import (
    AsymptoticsFitError,
    DomainError,
    KingState,
    ModelParams,
    ShootingError,
    barenblatt_profile,
    gamma_exponent,
    king_ode_integrate,
    king_slopes,
    solve_traveling_wave,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3
log = logging.getLogger("yamabe_ancients")


class UsageError(Exception):
    pass


def _emit(manifest: dict) -> None:
    print(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _manifest(args, **extra) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {"tool": "yamabe-ancients", "version": __version__, "command": args.command,
            "flags": flags, **extra}


def _model(n: int) -> ModelParams:
    try:
        return ModelParams(n)
    except ValueError as e:
        raise UsageError(str(e)) from e


# ---------------------------------------------------------------------------
# wave


def cmd_wave(args) -> int:
    if args.lam < 1.0:
        raise UsageError("lambda must be >= 1")
    model = _model(args.n)
    try:
        if args.lam == 1.0:
            prof = barenblatt_profile(model, args.ymin, args.ymax if args.ymax else 30.0, args.dy)
        else:
            prof = solve_traveling_wave(args.lam, model, args.ymin, args.ymax, args.dy,
                                        strict_tail=not args.lenient)
    except (ShootingError, AsymptoticsFitError) as e:
        _emit(_manifest(args, verdict="fail", error=type(e).__name__, detail=str(e)))
        return EXIT_FAIL
    files = [str(p) for p in prof.save(args.out)]
    _emit(_manifest(args, verdict="pass", outputs=files, profile=prof.metadata(),
                    gamma_exponent=gamma_exponent(args.lam, model)))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# barrier-check


def _ancient_from_args(args) -> AncientParams:
    try:
        return AncientParams(args.lam, args.lam2, args.h, args.h2, args.k, 0.0, args.tau0)
    except ValueError as e:
        raise UsageError(str(e)) from e


def cmd_barrier_check(args) -> int:
    model = _model(args.n)
    ap = _ancient_from_args(args)
    prof = BarrierProfiles.build(ap, model)
    kw = {"n_tau": args.n_tau}
    if args.dx:
        kw["dx"] = args.dx
    if args.q == "auto":
        try:
            ap, rep = find_q(ap, prof, tau_min=args.tau_min, **kw)
        except CertificationFailure as e:
            rep = e.report
            out = {"verdict": "fail", "detail": str(e),
                   "report": None if rep is None else rep.to_dict()}
            _emit(_manifest(args, **out))
            return EXIT_FAIL
    else:
        try:
            q = float(args.q)
        except ValueError as e:
            raise UsageError("--q must be a number or 'auto'") from e
        ap = replace(ap, q=q)
        rep = certify_supersolution(ap, prof, tau_min=args.tau_min, **kw)
        ap = replace(ap, certified=rep.passed)
    cert = {"n": args.n, "params": ap.to_dict(), "report": rep.to_dict()}
    outputs = []
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(cert, indent=2, sort_keys=True) + "\n")
        outputs.append(args.out)
    _emit(_manifest(args, verdict=rep.verdict, outputs=outputs, **cert))
    return {"pass": EXIT_PASS, "fail": EXIT_FAIL}.get(rep.verdict, EXIT_INCONCLUSIVE)


# ---------------------------------------------------------------------------
# evolve


def _load_certificate(path) -> tuple[ModelParams, AncientParams, dict]:
    try:
        cert = json.loads(Path(path).read_text())
        ap = AncientParams(**cert["params"])
        model = ModelParams(int(cert["n"]))
    except (OSError, KeyError, TypeError, ValueError) as e:
        raise UsageError(f"unreadable certification manifest {path}: {e}") from e
    if not (ap.certified and cert.get("report", {}).get("verdict") == "pass"):
        raise UsageError("manifest does not carry a passing certification")
    return model, ap, cert


def _config(args, m, ap: AncientParams, *, dx, X_for=None) -> EvolveConfig:
    span = args.tau_end + m
    X = args.X
    if X is None:
        # both fronts start near -+lam*m; keep 20 units of tail beyond them
        X = max(80.0, max(ap.lam, ap.lam2) * (X_for or m) + 20.0)
    try:
        return EvolveConfig(m=m, tau_end=args.tau_end, X=X, dx=dx, dtau=args.dtau,
                            snapshot_dt=span / args.snapshots, gauge=args.gauge)
    except ConfigError as e:
        raise UsageError(str(e)) from e


def _run(cfg, ap, prof, levels, space_levels):
    if levels > 1 or space_levels > 1:
        return evolve_extrapolated(cfg, ap, prof, levels=levels, space_levels=space_levels)
    return evolve(cfg, ap, prof)


def _pick(value, default):
    return default if value is None else value


def cmd_evolve(args) -> int:
    model, ap, _ = _load_certificate(args.manifest)
    if args.tau_end > ap.tau0:
        raise UsageError("--tau-end must not exceed the certified tau0")
    prof = BarrierProfiles.build(ap, model)
    out = Path(args.out)
    if args.compare_m:
        try:
            ms = sorted(float(v) for v in args.compare_m.split(","))
        except ValueError as e:
            raise UsageError("--compare-m expects a comma-separated list") from e
        if len(ms) != 3:
            raise UsageError("--compare-m expects exactly three values")
        # the comparison needs O(dtau^4 + dx^4) accuracy (see cauchy_study);
        # snapshots every unit of tau so the three runs share snapshot times
        levels, space = _pick(args.levels, 4), _pick(args.space_levels, 2)
        cfg = replace(_config(args, ms[0], ap, dx=_pick(args.dx, 0.1), X_for=ms[-1]),
                      snapshot_dt=1.0)
        try:
            rep, _ = cauchy_study(ms, cfg, ap, prof, levels=levels, space_levels=space, X0=args.X0)
        except ConfigError as e:
            raise UsageError(str(e)) from e
        out.mkdir(parents=True, exist_ok=True)
        (out / "cauchy.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
        _emit(_manifest(args, verdict="pass" if rep.passed else "fail",
                        outputs=[str(out / "cauchy.json")], cauchy=rep.to_dict()))
        return EXIT_PASS if rep.passed else EXIT_FAIL
    levels, space = _pick(args.levels, 2), _pick(args.space_levels, 1)
    cfg = _config(args, args.m, ap, dx=_pick(args.dx, 0.05))
    fld = _run(cfg, ap, prof, levels, space)
    sand = sandwich_check(fld, ap, prof, C=args.c_sand) if args.c_sand else sandwich_check(fld, ap, prof)
    files = fld.save_snapshots(out)
    man = run_manifest(fld, cfg, ap, sandwich=sand, files=files)
    man["richardson_levels"] = levels
    man["space_levels"] = space
    (out / "run.json").write_text(json.dumps(man, indent=2, default=_jsonable) + "\n")
    verdict = "pass" if sand.passed else "fail"
    _emit(_manifest(args, verdict=verdict, outputs=[str(out / "run.json")] + [str(f) for f in files],
                    sandwich=sand.to_dict(), params=ap.to_dict(), config=cfg.to_dict()))
    return EXIT_PASS if sand.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# curvature / king


def cmd_curvature(args) -> int:
    run = Path(args.run)
    if not (run / "run.json").is_file():
        raise UsageError(f"no run directory at {run}")
    meta = json.loads((run / "run.json").read_text())
    model = ModelParams(int(meta["n"]))
    fld = load_snapshots(run, model)
    ap = AncientParams(**meta["params"])
    rep = type1_monitor(fld, model, floor=args.floor, ap=ap)
    files = rep.save(run / "curvature")
    out = {"verdict": rep.verdict, "plateau": rep.plateau,
           "sup_tensor_max": float(np.nanmax(rep.sup_norms["tensor"])),
           "gauge_constant": rep.to_dict()["gauge_constant"], "outputs": [str(f) for f in files]}
    _emit(_manifest(args, **out))
    if not args.verdict:
        return EXIT_PASS
    return EXIT_PASS if rep.verdict == "pass" else EXIT_FAIL


def cmd_king(args) -> int:
    model = _model(args.n)
    try:
        start = KingState(args.xi0, args.zeta0, args.tau0)
        traj = king_ode_integrate(start, args.tau1, model)
        back = king_ode_integrate(start, args.tau0 - args.tau_back, model)
    except DomainError as e:
        raise UsageError(str(e)) from e
    lo = args.tau0 - args.tau_back
    slopes = king_slopes(back, (lo, lo + args.fit_width))
    targets = {"xi_slope": model.alpha, "zeta_slope": model.pm1}
    rel = {k: abs(slopes[k] - targets[k]) / targets[k] for k in targets}
    ok = all(v <= 0.02 for v in rel.values())
    _emit(_manifest(args, verdict="pass" if ok else "fail", slopes=slopes, targets=targets,
                    rel_error=rel, final=vars(traj.final), blew_up=traj.blew_up))
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="yamabe-ancients", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    w = sub.add_parser("wave", help="solve a traveling-wave profile")
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--lambda", dest="lam", type=float, required=True)
    w.add_argument("--ymin", type=float, default=-30.0)
    w.add_argument("--ymax", type=float, default=None)
    w.add_argument("--dy", type=float, default=0.01)
    w.add_argument("--lenient", action="store_true", help="accept a non-flat tail plateau")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_wave)

    b = sub.add_parser("barrier-check", help="certify the supersolution")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--lambda", dest="lam", type=float, required=True)
    b.add_argument("--lambda2", dest="lam2", type=float, required=True)
    b.add_argument("--h", type=float, default=0.0)
    b.add_argument("--h2", type=float, default=0.0)
    b.add_argument("--k", type=float, default=0.0)
    b.add_argument("--tau0", type=float, default=-10.0)
    b.add_argument("--tau-min", type=float, default=-40.0)
    b.add_argument("--q", default="auto")
    b.add_argument("--n-tau", type=int, default=48)
    b.add_argument("--dx", type=float, default=None)
    b.add_argument("--out", default=None, help="certification manifest (JSON)")
    b.set_defaults(func=cmd_barrier_check)

    e = sub.add_parser("evolve", help="evolve u_m from the upper barrier")
    e.add_argument("--manifest", required=True)
    e.add_argument("--m", type=float, default=30.0)
    e.add_argument("--tau-end", type=float, default=-10.0)
    e.add_argument("--X", type=float, default=None,
                   help="half-width of the domain (default: covers the fronts at -m)")
    e.add_argument("--dx", type=float, default=None,
                   help="grid spacing (default 0.05; 0.1 with --compare-m)")
    e.add_argument("--dtau", type=float, default=0.01)
    e.add_argument("--snapshots", type=int, default=20)
    e.add_argument("--levels", type=int, default=None,
                   help="Richardson levels in dtau, 1 = none (default 2; 4 with --compare-m)")
    e.add_argument("--space-levels", type=int, choices=(1, 2), default=None,
                   help="2 adds a dx/2 run to cancel O(dx^2) (default 1; 2 with --compare-m)")
    e.add_argument("--gauge", choices=GAUGES, default="logphi")
    e.add_argument("--c-sand", type=float, default=None)
    e.add_argument("--compare-m", default=None)
    e.add_argument("--X0", type=float, default=20.0)
    e.add_argument("--out", default="run")
    e.set_defaults(func=cmd_evolve)

    c = sub.add_parser("curvature", help="type-I curvature monitor for a run")
    c.add_argument("--run", required=True)
    c.add_argument("--verdict", action="store_true")
    c.add_argument("--floor", type=float, default=0.05)
    c.set_defaults(func=cmd_curvature)

    k = sub.add_parser("king", help="integrate the King system")
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--xi0", type=float, required=True)
    k.add_argument("--zeta0", type=float, required=True)
    k.add_argument("--tau0", type=float, required=True)
    k.add_argument("--tau1", type=float, required=True)
    k.add_argument("--tau-back", type=float, default=30.0)
    k.add_argument("--fit-width", type=float, default=10.0)
    k.set_defaults(func=cmd_king)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(json.dumps({"tool": "yamabe-ancients", "verdict": "usage", "error": str(e)}))
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        _emit(_manifest(args, verdict="usage", error=str(e)))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
