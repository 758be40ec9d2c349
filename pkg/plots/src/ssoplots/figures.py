"""Figure renderers: phase masks with free-boundary overlays, signed-field
contours, boundary adjusted energy curves, slope-fit summaries, and the
volume-vs-penalty sweep trend against its closed form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .runio import (
    GridMeta,
    read_fits,
    read_grid,
    read_node_csv,
    read_state,
    read_sweep,
    read_weiss,
)

KINDS = ("masks", "contours", "weiss", "fits", "sweep")


@dataclass(frozen=True)
class FigureSpec:
    run_dir: Path
    kind: str
    out_path: Path
    style: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; known: {', '.join(KINDS)}")
        required = {
            "masks": ["grid.json", "mask_plus.csv", "mask_minus.csv"],
            "contours": ["grid.json", "u.csv"],
            "weiss": ["weiss.csv"],
            "fits": ["fits.csv"],
            "sweep": ["sweep.csv"],
        }[self.kind]
        missing = [name for name in required if not (self.run_dir / name).exists()]
        if missing:
            raise FileNotFoundError(f"run directory {self.run_dir} lacks {', '.join(missing)}")


def render(spec: FigureSpec) -> Path:
    spec.validate()
    fig = {
        "masks": _render_masks,
        "contours": _render_contours,
        "weiss": _render_weiss,
        "fits": _render_fits,
        "sweep": _render_sweep,
    }[spec.kind](spec)
    spec.out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.out_path, dpi=spec.style.get("dpi", 150), bbox_inches="tight")
    plt.close(fig)
    return spec.out_path


def _dilate(mask: np.ndarray, cells: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(cells):
        grown = out.copy()
        for axis in range(mask.ndim):
            grown |= np.roll(out, 1, axis=axis)
            grown |= np.roll(out, -1, axis=axis)
        if mask.ndim == 2:
            for sx in (1, -1):
                for sy in (1, -1):
                    grown |= np.roll(np.roll(out, sx, axis=0), sy, axis=1)
        out = grown
    return out


def _render_masks(spec: FigureSpec):
    grid = read_grid(spec.run_dir)
    mp = read_node_csv(spec.run_dir / "mask_plus.csv", grid) > 0.5
    mm = read_node_csv(spec.run_dir / "mask_minus.csv", grid) > 0.5
    fig, ax = plt.subplots(figsize=(7, 4))
    if grid.dimension == 1:
        x = grid.axis(0)
        ax.fill_between(x, 0, mp.astype(float), step="mid", alpha=0.7, label="positive phase")
        ax.fill_between(x, 0, -mm.astype(float), step="mid", alpha=0.7, label="negative phase")
        ax.set_xlabel("x")
        ax.set_yticks([])
    else:
        x, y = grid.axis(0), grid.axis(1)
        phase = np.zeros(grid.nodes)
        phase[mp] = 1.0
        phase[mm] = -1.0
        ax.pcolormesh(x, y, phase.T, cmap="RdBu_r", vmin=-1.3, vmax=1.3, shading="nearest")
        X, Y = np.meshgrid(x, y, indexing="ij")
        ax.contour(X, Y, mp.astype(float), levels=[0.5], colors="darkred", linewidths=1.2)
        ax.contour(X, Y, mm.astype(float), levels=[0.5], colors="navy", linewidths=1.2)
        contact = _dilate(mp, 2) & _dilate(mm, 2)
        if contact.any():
            ax.plot(X[contact], Y[contact], ".", color="black", ms=2, label="two-phase contact")
            ax.legend(loc="upper right", fontsize=8)
        ax.set_aspect("equal")
        # box outline
        ax.plot(
            [x[0], x[-1], x[-1], x[0], x[0]],
            [y[0], y[0], y[-1], y[-1], y[0]],
            color="k",
            lw=1.0,
        )
    ax.set_title("phase masks and free boundaries")
    return fig


def _render_contours(spec: FigureSpec):
    grid = read_grid(spec.run_dir)
    u = read_node_csv(spec.run_dir / "u.csv", grid)
    fig, ax = plt.subplots(figsize=(7, 4))
    if grid.dimension == 1:
        x = grid.axis(0)
        ax.plot(x, u, lw=1.5)
        ax.axhline(0.0, color="gray", lw=0.8)
        ax.set_xlabel("x")
        ax.set_ylabel("u")
    else:
        x, y = grid.axis(0), grid.axis(1)
        X, Y = np.meshgrid(x, y, indexing="ij")
        vmax = float(np.abs(u).max()) or 1.0
        cs = ax.contourf(X, Y, u, levels=21, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
        ax.contour(X, Y, u, levels=[0.0], colors="k", linewidths=1.0)
        fig.colorbar(cs, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
    ax.set_title("signed eigenfunction")
    return fig


def _render_weiss(spec: FigureSpec):
    curves = read_weiss(spec.run_dir)
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for i, (center, data) in enumerate(sorted(curves.items())):
        r = np.array(data["r"])
        w = np.array(data["W"])
        c = data["C"]
        color = f"C{i}"
        ax.plot(r, w, "o-", color=color, label=f"W at ({center}); C={c:.3g}")
        ax.plot(r, w + c * r, "--", color=color, alpha=0.7)
    ax.set_xlabel("r")
    ax.set_ylabel("boundary adjusted energy")
    ax.set_title("energy scan: raw (solid) and +C r corrected (dashed)")
    if curves:
        ax.legend(fontsize=8)
    return fig


def _render_fits(spec: FigureSpec):
    rows = read_fits(spec.run_dir)
    fig, ax = plt.subplots(figsize=(6.5, 4))
    if rows:
        idx = np.arange(len(rows))
        width = 0.38
        ax.bar(idx - width / 2, [r["beta_plus"] for r in rows], width, label="slope +")
        ax.bar(idx + width / 2, [r["beta_minus"] for r in rows], width, label="slope -")
        labels = [f"({r['center']})\nres {r['residual']:.2f}" for r in rows]
        ax.set_xticks(idx)
        ax.set_xticklabels(labels, fontsize=7)
        ax.legend()
    else:
        ax.text(0.5, 0.5, "no two-plane fits recorded", ha="center", va="center")
        ax.set_axis_off()
    ax.set_title("two-plane slope fits at contact points")
    return fig


def _render_sweep(spec: FigureSpec):
    rows = read_sweep(spec.run_dir)
    fig, ax = plt.subplots(figsize=(6.5, 4))
    lams = np.array([row["lambda"] for row in rows])
    # each 1D optimum is a pair of intervals, so the measured length is half
    # the total volume
    lengths = np.array([row["volume"] for row in rows]) / 2.0
    order = np.argsort(lams)
    ax.plot(lams[order], lengths[order], "o", ms=7, label="measured interval length")
    ref = np.linspace(lams.min() * 0.8, lams.max() * 1.2, 200)
    ax.plot(ref, (math.pi**2 / ref) ** (1.0 / 3.0), "-", color="gray", label=r"$(\pi^2/\Lambda)^{1/3}$")
    ax.set_xlabel(r"$\Lambda$")
    ax.set_ylabel("interval length")
    ax.set_title("optimal interval length against the penalty")
    ax.legend()
    return fig
