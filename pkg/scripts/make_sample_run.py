"""Regenerate the bundled sample run consumed by the plots package tests.

Produces a small two-phase contact run with diagnostics and a 1D sweep:
    sample_run/contact2d/   state, masks, u, weiss.csv, fits.csv, report.json
    sample_run/sweep1d/     per-lambda runs and sweep.csv
"""

import shutil
import sys
from pathlib import Path

from sso.cli import main as sso_main

ROOT = Path(__file__).resolve().parents[1]
SAMPLE = ROOT / "sample_run"


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run() -> int:
    if SAMPLE.exists():
        shutil.rmtree(SAMPLE)
    cfg2d = SAMPLE / "contact2d.toml"
    write(
        cfg2d,
        "dimension = 2\n"
        "box = [2.0, 1.0]\n"
        "resolution = [65, 33]\n"
        "lambda = 1.0\n"
        'backend = "multiphase"\n'
        "seed = 3\n",
    )
    out2d = SAMPLE / "contact2d"
    if sso_main(["solve", "--config", str(cfg2d), "--out", str(out2d)]) != 0:
        return 1
    if sso_main(["diagnose", str(out2d)]) != 0:
        return 1

    cfg1d = SAMPLE / "sweep1d.toml"
    write(
        cfg1d,
        "dimension = 1\n"
        "box = 6.0\n"
        "resolution = 601\n"
        "lambda = [0.5, 1.0, 2.0]\n"
        'backend = "multiphase"\n'
        "seed = 3\n",
    )
    out1d = SAMPLE / "sweep1d"
    return sso_main(["sweep", "--config", str(cfg1d), "--out", str(out1d)])


if __name__ == "__main__":
    sys.exit(run())
