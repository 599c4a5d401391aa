from __future__ import annotations

import json

import pytest

from yamabe_ancients.barriers import TOL_L
from yamabe_ancients.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, json.loads(capsys.readouterr().out)


@pytest.fixture(scope="module")
def cert_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    code = main(["barrier-check", "--n", "4", "--lambda", "2", "--lambda2", "2", "--k", "1",
                 "--out", str(d / "cert.json")])
    assert code == EXIT_PASS
    return d


def test_wave_rejects_lambda_below_one(capsys, tmp_path):
    code, out = _run(capsys, "wave", "--n", 4, "--lambda", 0.5, "--out", tmp_path / "w")
    assert code == EXIT_USAGE and out["verdict"] == "usage"


def test_wave_writes_profile(capsys, tmp_path):
    code, out = _run(capsys, "wave", "--n", 4, "--lambda", 2, "--out", tmp_path / "w")
    assert code == EXIT_PASS and len(out["outputs"]) == 2
    assert out["gamma_exponent"] == pytest.approx(out["profile"]["tail_rate"], rel=1e-3)


def test_bad_arguments_are_usage_errors(capsys):
    code, out = _run(capsys, "evolve")
    assert code == EXIT_USAGE and out["verdict"] == "usage"
    code, _ = _run(capsys, "king", "--n", 2, "--xi0", 1.5, "--zeta0", 0.1,
                   "--tau0", 0, "--tau1", 1)
    assert code == EXIT_USAGE


def test_barrier_check_q0_fails(capsys):
    code, out = _run(capsys, "barrier-check", "--n", 4, "--lambda", 2, "--lambda2", 2,
                     "--k", 1, "--q", 0)
    assert code == EXIT_FAIL and out["verdict"] == "fail"
    assert out["report"]["maxL_global"] > TOL_L


def test_certificate_manifest(cert_dir):
    cert = json.loads((cert_dir / "cert.json").read_text())
    assert cert["params"]["certified"] and cert["report"]["verdict"] == "pass"
    assert 0.3 < cert["params"]["q"] < 0.5


def test_evolve_refuses_failed_certificate(capsys, tmp_path, cert_dir):
    cert = json.loads((cert_dir / "cert.json").read_text())
    cert["report"]["verdict"] = "fail"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(cert))
    code, _ = _run(capsys, "evolve", "--manifest", bad, "--out", tmp_path / "r")
    assert code == EXIT_USAGE
    code, _ = _run(capsys, "evolve", "--manifest", cert_dir / "cert.json", "--tau-end", 0,
                   "--out", tmp_path / "r")
    assert code == EXIT_USAGE


def test_evolve_then_curvature(capsys, tmp_path, cert_dir):
    run = tmp_path / "r"
    code, out = _run(capsys, "evolve", "--manifest", cert_dir / "cert.json", "--m", 14,
                     "--X", 50, "--dx", 0.1, "--dtau", 0.02, "--snapshots", 4, "--out", run)
    assert code == EXIT_PASS and out["sandwich"]["passed"]
    man = json.loads((run / "run.json").read_text())
    assert man["richardson_levels"] == 2 and len(man["snapshot_times"]) == 5
    code, out = _run(capsys, "curvature", "--run", run, "--verdict")
    assert code == EXIT_PASS and out["verdict"] == "pass"
    assert out["gauge_constant"] == 6.0


def test_curvature_missing_run(capsys, tmp_path):
    code, out = _run(capsys, "curvature", "--run", tmp_path / "none")
    assert code == EXIT_USAGE


def test_king(capsys):
    code, out = _run(capsys, "king", "--n", 4, "--xi0", 1.5, "--zeta0", 0.1,
                     "--tau0", 0, "--tau1", 1)
    assert code == EXIT_PASS
    assert out["slopes"]["xi_slope"] == pytest.approx(2 / 3, rel=0.02)
    assert out["slopes"]["zeta_slope"] == pytest.approx(2.0, rel=0.02)
