import csv
import io
import json
import shutil
import subprocess

import pytest

from stokesdarcy.cli import main
from stokesdarcy.linalg import read_coordinate


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_no_arguments(capsys):
    code, _, err = run([], capsys)
    assert code == 2 and "usage" in err


@pytest.mark.parametrize(
    "argv",
    [["--bogus"], ["solve", "--bogus"], ["solve", "--h", "1/3"], ["solve", "--precond", "lower"], ["solve", "--mu", "-1"]],
)
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2 and "error" in err


def test_exact_below_limit_needs_force(capsys):
    code, _, err = run(["solve", "--h", "1/640", "--mode", "exact"], capsys)
    assert code == 2 and "--force" in err


def test_solve_report(capsys):
    code, out, _ = run(["solve", "--condition", "bjs", "--h", "0.1", "--precond", "con", "--mode", "exact"], capsys)
    rec = json.loads(out)
    assert code == 0 and rec["converged"] and rec["true_residual"] <= 1e-8
    assert rec["precond"] == "con" and rec["size"] > 0


def test_solve_files(tmp_path, capsys):
    rep, mtx = tmp_path / "r.json", tmp_path / "a.mtx"
    code, out, _ = run(["solve", "--h", "1/10", "--precond", "tri", "--mode", "inexact",
                        "--report", str(rep), "--export-matrix", str(mtx)], capsys)
    assert code == 0
    assert out.splitlines()[0].startswith("condition,precond,mode,h")
    size = json.loads(rep.read_text())["size"]
    assert read_coordinate(mtx).shape == (size, size)


def test_solve_not_converged_exit_1(capsys):
    code, out, _ = run(["solve", "--h", "0.1", "--precond", "none", "--maxit", "20"], capsys)
    assert code == 1 and not json.loads(out)["converged"]


def test_spectrum_csv(capsys):
    code, out, _ = run(["spectrum", "--h", "0.25", "--precond", "tri", "--condition", "BJ"], capsys)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["re", "im"] and len(rows) > 20
    assert all(len(r) == 2 for r in rows)


def test_convergence_csv(capsys):
    code, out, _ = run(["convergence", "--hs", "1/10,1/20"], capsys)
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 3 and lines[0].startswith("h,err_u")
    assert float(lines[2].split(",")[5]) > 1.5


def test_sweep_deterministic(tmp_path, capsys):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("mu = 1e-3, 1\nk = 1e-2\nalpha = 1\nh = 1/10\ncondition = BJ\nprecond = diag,con\n", encoding="utf-8")
    a = run(["sweep", str(cfg), "--no-timings"], capsys)
    b = run(["sweep", str(cfg), "--no-timings"], capsys)
    assert a[0] == 0 and a[1] == b[1]
    assert len(a[1].strip().splitlines()) == 5


def test_sweep_missing_config(capsys):
    code, _, err = run(["sweep", "/nonexistent/sweep.cfg"], capsys)
    assert code == 2


def test_sweep_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mu = -1\n")
    code, _, err = run(["sweep", str(cfg)], capsys)
    assert code == 2 and "bad sweep config" in err


def test_verify_records(capsys):
    code, out, _ = run(["verify"], capsys)
    recs = [json.loads(line) for line in out.strip().splitlines()]
    names = [r["name"] for r in recs]
    assert code == 0 and any(n.startswith("lemma_norm") for n in names) and "fov_drift_Ptri" in names
    assert main(["verify", "--strict"]) == (0 if all(r["passed"] for r in recs) else 1)


@pytest.mark.skipif(shutil.which("stokesdarcy") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["stokesdarcy"], capture_output=True, text=True)
    assert proc.returncode == 2
