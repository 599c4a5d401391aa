"""Compiled vs pure-Python implicit-Euler kernels.

Times one Newton-solved step of each kernel on a barrier-like profile and
checks that both backends return the same answer.

    python benchmarks/bench_kernels.py --sizes 801 3201 --repeat 20 --evolve
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from yamabe_ancients import _kernels_py
from yamabe_ancients.kernels import HAVE_COMPILED
from yamabe_ancients.profiles import ModelParams

_X = 25.0


def _profile(N: int, model: ModelParams):
    """Two tanh-like fronts on a slightly excited cylinder, as ln phi."""
    x = np.linspace(-_X, _X, N)
    ex = 1e-6 + np.exp(model.pm1 * (np.abs(x) - 20.0))
    return -np.log1p(ex) / model.pm1


def _cases(N: int, model: ModelParams):
    lg = _profile(N, model)
    dx = 2 * _X / (N - 1)
    phi = np.exp(lg)
    u = np.exp(-model.pm1 * lg)
    return {
        "logphi_step": (lg, lg[0], lg[-1], 0.01, dx, model.p),
        "conformal_step": (phi, phi[0], phi[-1], 0.01, dx, model.p),
        "pressure_step": (u, u[0], u[-1], 0.01, dx, model.p),
    }


def bench(sizes, repeat: int, n: int = 4) -> list[dict]:
    model = ModelParams(n)
    backends = {"python": _kernels_py}
    if HAVE_COMPILED:
        from yamabe_ancients import _kernels
        backends["compiled"] = _kernels
    rows = []
    for N in sizes:
        for name, args in _cases(N, model).items():
            row = {"kernel": name, "N": N}
            ref = None
            for bname, mod in backends.items():
                fn = getattr(mod, name)
                out, its, ok = fn(*args)
                if ref is None:
                    ref = out
                else:
                    scale = np.maximum(np.abs(ref), 1e-300)
                    row["max_rel_diff"] = float(np.max(np.abs(out - ref) / scale))
                t = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
                row[f"{bname}_ms"] = 1e3 * t
                row[f"{bname}_iters"] = its
                row[f"{bname}_ok"] = bool(ok)
            if "compiled_ms" in row:
                row["speedup"] = row["python_ms"] / row["compiled_ms"]
            rows.append(row)
    return rows


def bench_evolve(m: float = 20.0) -> dict:
    """Wall time of one barrier-started run (n=4, lam=lam'=2, k=1) per backend."""
    import os
    import time

    from yamabe_ancients.barriers import AncientParams, BarrierProfiles
    from yamabe_ancients.evolution import EvolveConfig, evolve

    model = ModelParams(4)
    ap = AncientParams(2.0, 2.0, k=1.0, q=0.415, tau0=-10.0, certified=True)
    prof = BarrierProfiles.build(ap, model)
    out = {}
    for name in (["python", "compiled"] if HAVE_COMPILED else ["python"]):
        cfg = EvolveConfig(m=m, tau_end=-10.0, X=80.0, dx=0.05, dtau=0.01, backend=name)
        t = time.perf_counter()
        evolve(cfg, ap, prof, track_margins=False)
        out[f"{name}_s"] = time.perf_counter() - t
    if "compiled_s" in out:
        out["speedup"] = out["python_s"] / out["compiled_s"]
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[401, 1601, 4001])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--evolve", action="store_true", help="also time a full evolution run")
    ap.add_argument("--json", default=None, help="write the rows to this file")
    args = ap.parse_args(argv)
    if not HAVE_COMPILED:
        print("compiled core not built; timing the Python fallback only", file=sys.stderr)
    rows = bench(args.sizes, args.repeat, args.n)
    hdr = f"{'kernel':<16}{'N':>7}{'python ms':>12}{'compiled ms':>13}{'speedup':>9}{'rel diff':>11}"
    print(hdr)
    for r in rows:
        print(f"{r['kernel']:<16}{r['N']:>7}{r['python_ms']:>12.3f}"
              f"{r.get('compiled_ms', float('nan')):>13.3f}{r.get('speedup', float('nan')):>9.2f}"
              f"{r.get('max_rel_diff', float('nan')):>11.1e}")
    result = {"kernels": rows}
    if args.evolve:
        result["evolve"] = bench_evolve()
        print("evolve m=20:", ", ".join(f"{k}={v:.2f}" for k, v in result["evolve"].items()))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
