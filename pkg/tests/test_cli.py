import csv
import json
import math
from pathlib import Path

import pytest

from sso.cli import main


CONFIG_1D = """\
dimension = 1
box = 6.0
resolution = 601
lambda = 1.0
backend = "multiphase"
seed = 3
"""


@pytest.fixture(scope="module")
def solved_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.toml"
    cfg.write_text(CONFIG_1D)
    out = root / "out"
    code = main(["solve", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    return cfg, out


def test_solve_writes_run_directory(solved_run):
    _, out = solved_run
    for name in ("state.json", "manifest.json", "u.csv", "mask_plus.csv", "mask_minus.csv", "history.csv", "grid.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    for name in manifest["files"]:
        assert (out / name).exists()


def test_solve_deterministic_rerun(solved_run, tmp_path):
    cfg, out = solved_run
    out2 = tmp_path / "out2"
    assert main(["solve", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out / "state.json").read_bytes() == (out2 / "state.json").read_bytes()
    assert (out / "u.csv").read_bytes() == (out2 / "u.csv").read_bytes()
    assert (out / "history.csv").read_bytes() == (out2 / "history.csv").read_bytes()


def test_solve_rejects_bad_lambda(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(CONFIG_1D.replace("lambda = 1.0", "lambda = -2.0"))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "lambda must be positive" in capsys.readouterr().err


def test_solve_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(CONFIG_1D + "mystery_knob = 3\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "mystery_knob" in capsys.readouterr().err


def test_diagnose_run(solved_run):
    _, out = solved_run
    assert main(["diagnose", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    for key in (
        "energy_balance_residual",
        "eigen_match_residual",
        "lipschitz_estimate",
        "contact_distance",
        "nondegeneracy_eta",
        "slope_identity_residual",
    ):
        assert key in report
    assert (out / "weiss.csv").exists()
    assert (out / "fits.csv").exists()


def test_diagnose_missing_dir(tmp_path):
    assert main(["diagnose", str(tmp_path / "nope")]) == 1


def test_validate_unknown_suite(capsys):
    assert main(["validate", "bogus"]) == 1
    assert "eigen" in capsys.readouterr().err


def test_validate_eigen():
    assert main(["validate", "eigen"]) == 0


def test_sweep(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(CONFIG_1D.replace("lambda = 1.0", "lambda = [0.5, 1.0, 2.0]"))
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    for row in rows:
        lam = float(row["lambda"])
        ell = float(row["volume"]) / 2.0
        assert ell == pytest.approx((math.pi**2 / lam) ** (1 / 3), rel=0.03)
        assert (out / f"lam_{lam:g}" / "state.json").exists()


def test_sweep_empty_lambda_list(tmp_path, capsys):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(CONFIG_1D.replace("lambda = 1.0", "lambda = []"))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "empty" in capsys.readouterr().err


def test_sweep_partial_failure(tmp_path):
    cfg = tmp_path / "sweep.toml"
    # the huge lambda collapses the relaxed phases; other rows still written
    cfg.write_text(
        CONFIG_1D.replace("lambda = 1.0", "lambda = [1.0, 1e6]").replace(
            'backend = "multiphase"', 'backend = "relaxed"'
        )
    )
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 2
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert float(rows[0]["lambda"]) == 1.0
