import re
import subprocess
import sys

import pytest

from ambistop import cli

BM1 = """\
problem.kind: ambiguity
diffusion.family: ArithmeticBM
diffusion.mu: 0
diffusion.sigma: 1
ambiguity.kappa: 1
discount.r: 4
reward.family: Straddle
solver.x_min: -2
solver.x_max: 2
"""

GBM1 = """\
problem.kind: crash
diffusion.family: GeometricBM
diffusion.mu: 0
diffusion.sigma: 1
discount.r: 1
reward.family: Call
reward.K: 1
crash.factor: 0.5
"""

ERROR_LINE = re.compile(r"^error code=(\d) type=\w+: .+\n$")


@pytest.fixture
def bm1(tmp_path):
    p = tmp_path / "bm1.yaml"
    p.write_text(BM1)
    return str(p)


@pytest.fixture
def gbm1(tmp_path):
    p = tmp_path / "gbm1.yaml"
    p.write_text(GBM1)
    return str(p)


def test_roots(bm1, capsys):
    assert cli.main(["roots", bm1]) == 0
    out = capsys.readouterr().out
    assert "alpha1=-2\nalpha2=4\nbeta1=-4\nbeta2=2\n" in out


def test_solve_summary_and_csv(bm1, tmp_path, capsys):
    csv = tmp_path / "v.csv"
    assert cli.main(["solve", bm1, "-o", str(csv), "--points", "21"]) == 0
    out = capsys.readouterr().out
    assert "x0=0 v=0.207998521335 c_star=0 " in out
    assert "stopping_set=[-inf, -0.352727169301] u [0.352727169301, inf]" in out
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("# ambistop-csv/1 command=solve")
    assert lines[1] == "x,g,v,c_star,lambda_star,stop"
    assert len(lines) == 23
    assert lines[12].startswith("0,0,0.207998521335,0,")


def test_solve_is_byte_identical(bm1, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["solve", bm1, "-o", str(a), "--points", "11"])
    cli.main(["solve", bm1, "-o", str(b), "--points", "11"])
    assert a.read_bytes() == b.read_bytes()


def test_crash(gbm1, tmp_path, capsys):
    csv = tmp_path / "c.csv"
    assert cli.main(["crash", gbm1, "-o", str(csv), "--points", "5"]) == 0
    out = capsys.readouterr().out
    assert "gamma=2\nx_star=2\nd=0.25\nx_prime=1.07179676972\n" in out
    rows = csv.read_text().splitlines()
    assert rows[1] == "x,g,g_hat,value" and len(rows) == 7


def test_psi(bm1, tmp_path):
    csv = tmp_path / "psi.csv"
    assert cli.main(["psi", bm1, "-o", str(csv), "--set", "solver.grid_n=64"]) == 0
    rows = csv.read_text().splitlines()
    assert rows[1].split(",")[0] == "x" and len(rows) == 66


def test_override_changes_problem(bm1, capsys):
    assert cli.main(["roots", bm1, "--set", "ambiguity.kappa=0"]) == 0
    assert "alpha1=-2.82842712475" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv, code",
    [
        (["solve", "/nonexistent.yaml"], 2),
        (["solve", "{bm1}", "--set", "nosuch.key=1"], 2),
        (["solve", "{bm1}", "--set", "diffusion.sigma=0"], 2),
        (["crash", "{bm1}"], 2),
        (["crash", "{gbm1}", "--set", "diffusion.mu=1.5"], 3),
        (["verify", "--tol", "5=abc"], 2),
        (["oracle", "FIX-XYZ"], 2),
    ],
)
def test_errors_are_single_lines(argv, code, bm1, gbm1, capsys):
    argv = [a.format(bm1=bm1, gbm1=gbm1) for a in argv]
    assert cli.main(argv) == code
    err = capsys.readouterr().err
    m = ERROR_LINE.match(err)
    assert m and int(m.group(1)) == code


def test_verify_corrupted_tolerance_fails(capsys):
    assert cli.main(["verify", "--only", "1", "5", "--tol", "5=1e-9"]) == 4
    out = capsys.readouterr().out
    assert "[PASS] criterion 1" in out and "[FAIL] criterion 5" in out
    assert "1/2 criteria passed" in out


def test_verify_passes(capsys):
    assert cli.main(["verify", "--only", "1", "5"]) == 0
    assert "2/2 criteria passed" in capsys.readouterr().out


def test_oracle_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv(cli.SEED_ENV, "99")
    assert cli.main(["oracle", "FIX-GBM1", "--paths", "2000"]) == 0
    first = capsys.readouterr().out
    assert "seed=99" in first and "tree=0.0624154804792 pass" in first
    assert cli.main(["oracle", "FIX-GBM1", "--paths", "2000", "--seed", "99"]) == 0
    assert capsys.readouterr().out == first


def test_entry_point():
    out = subprocess.run([sys.executable, "-m", "ambistop.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("ambistop ")
