"""Readers for the solver's run-directory file formats.

The file contract is the only coupling to the solver: grid.json sidecar,
ix[,iy],value CSVs for fields and masks, weiss.csv, fits.csv, state.json,
and sweep.csv.  Everything is read-only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GridMeta:
    dimension: int
    extents: tuple[float, ...]
    nodes: tuple[int, ...]
    h: float
    origin: tuple[float, ...]

    def axis(self, a: int) -> np.ndarray:
        return self.origin[a] + self.h * np.arange(self.nodes[a])


def read_grid(run_dir: Path) -> GridMeta:
    meta = json.loads((run_dir / "grid.json").read_text())
    return GridMeta(
        dimension=int(meta["dimension"]),
        extents=tuple(float(x) for x in meta["extents"]),
        nodes=tuple(int(n) for n in meta["nodes"]),
        h=float(meta["h"]),
        origin=tuple(float(x) for x in meta.get("origin", [0.0] * int(meta["dimension"]))),
    )


def read_node_csv(path: Path, grid: GridMeta) -> np.ndarray:
    values = np.zeros(grid.nodes)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != grid.dimension + 1:
            raise ValueError(f"{path.name} does not match the grid dimension")
        for row in reader:
            idx = tuple(int(c) for c in row[:-1])
            values[idx] = float(row[-1])
    return values


def read_state(run_dir: Path) -> dict:
    return json.loads((run_dir / "state.json").read_text())["scalars"]


def read_weiss(run_dir: Path) -> dict[str, dict]:
    """Curves keyed by the center label: radii, values, slack."""
    curves: dict[str, dict] = {}
    with open(run_dir / "weiss.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            entry = curves.setdefault(row["center"], {"r": [], "W": [], "C": float(row["C"])})
            entry["r"].append(float(row["r"]))
            entry["W"].append(float(row["W"]))
    return curves


def read_fits(run_dir: Path) -> list[dict]:
    with open(run_dir / "fits.csv", newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "center": row["center"],
                    "beta_plus": float(row["beta_plus"]),
                    "beta_minus": float(row["beta_minus"]),
                    "nu": tuple(float(x) for x in row["nu"].split(";")),
                    "residual": float(row["residual"]),
                }
            )
        return rows


def read_sweep(sweep_dir: Path) -> list[dict]:
    with open(sweep_dir / "sweep.csv", newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append({k: (math_inf_safe(v)) for k, v in row.items()})
        return rows


def math_inf_safe(text: str) -> float:
    return float("inf") if text == "inf" else float(text)
