"""Uniform Cartesian grids on a box, nodal fields, and elementary quadratures.

Fields carry a hard zero on every node outside the inside mask, which realizes
the extension-by-zero convention for Dirichlet problems.  All energies and
inner products are link/node sums weighted by h^d, so that the Rayleigh
identity with the matching finite-difference Laplacian holds exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "BoxGeometry",
    "DiskGeometry",
    "build_grid",
    "dirichlet_energy",
    "l2_inner",
    "l2_norm",
    "sphere_average",
    "gradient_field",
    "sample_field",
    "write_field_csv",
    "read_field_csv",
    "write_grid_json",
    "read_grid_json",
]

_REL_TOL = 1e-9


@dataclass(frozen=True)
class BoxGeometry:
    """Axis-aligned box with the given extents; lower corner at `origin`."""

    extents: tuple[float, ...]
    origin: tuple[float, ...] | None = None


@dataclass(frozen=True)
class DiskGeometry:
    """Disk of radius `radius` inscribed in a box of the given extents.

    The inside mask keeps only nodes strictly inside the disk (centered in
    the box unless `center` is given).  With the default extents the disk is
    the inscribed one of the square of side 2*radius.
    """

    radius: float
    extents: tuple[float, ...] | None = None
    origin: tuple[float, ...] | None = None
    center: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Grid:
    """Uniform grid over a box; spacing is identical along every axis.

    `inside_mask` is False on the outermost node layer (the Dirichlet wall of
    the box) and, for disk geometry, outside the disk as well.
    """

    dimension: int
    extents: tuple[float, ...]
    nodes: tuple[int, ...]
    h: float
    origin: tuple[float, ...]
    inside_mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.inside_mask.setflags(write=False)

    @property
    def n_inside(self) -> int:
        return int(self.inside_mask.sum())

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * np.arange(self.nodes[axis])

    def node_coords(self) -> np.ndarray:
        """Coordinates of every node, shape (*nodes, dimension)."""
        axes = [self.axis_coords(a) for a in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def same_as(self, other: "Grid") -> bool:
        return (
            self.dimension == other.dimension
            and self.nodes == other.nodes
            and math.isclose(self.h, other.h, rel_tol=_REL_TOL)
            and all(
                math.isclose(a, b, rel_tol=_REL_TOL, abs_tol=1e-12)
                for a, b in zip(self.origin, other.origin)
            )
        )


@dataclass(frozen=True)
class ScalarField:
    """Nodal real values on a grid, exactly zero outside the inside mask."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = self.values
        if v.shape != self.grid.nodes:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.nodes}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        if np.any(v[~self.grid.inside_mask] != 0.0):
            raise ValueError("field is nonzero outside the inside mask")
        v.setflags(write=False)

    @staticmethod
    def from_values(grid: Grid, values: np.ndarray) -> "ScalarField":
        """Build a field, zeroing whatever falls outside the inside mask."""
        v = np.array(values, dtype=float)
        v[~grid.inside_mask] = 0.0
        return ScalarField(grid, v)

    @staticmethod
    def zeros(grid: Grid) -> "ScalarField":
        return ScalarField(grid, np.zeros(grid.nodes))

    @staticmethod
    def from_callable(grid: Grid, fn) -> "ScalarField":
        """Sample `fn` (vectorized over an (..., d) coordinate array) on the mask."""
        pts = grid.node_coords()
        vals = np.asarray(fn(pts), dtype=float)
        return ScalarField.from_values(grid, vals)

    def positive_part(self) -> "ScalarField":
        return ScalarField(self.grid, np.maximum(self.values, 0.0))

    def negative_part(self) -> "ScalarField":
        return ScalarField(self.grid, np.maximum(-self.values, 0.0))


@dataclass(frozen=True)
class VectorField:
    """Nodal vector values, compactly supported: all components vanish on a
    `margin`-node band around the complement of the inside mask."""

    grid: Grid
    components: np.ndarray = field(repr=False)
    margin: int = 2

    def __post_init__(self):
        c = self.components
        expected = self.grid.nodes + (self.grid.dimension,)
        if c.shape != expected:
            raise ValueError(f"vector field shape {c.shape}, expected {expected}")
        if not np.all(np.isfinite(c)):
            raise ValueError("vector field contains non-finite values")
        allowed = interior_band(self.grid, self.margin)
        if np.any(c[~allowed] != 0.0):
            raise ValueError(f"vector field is nonzero within {self.margin} nodes of the boundary")
        c.setflags(write=False)

    @staticmethod
    def from_components(grid: Grid, components: np.ndarray, margin: int = 2) -> "VectorField":
        """Build a vector field, hard-zeroing the margin band."""
        c = np.array(components, dtype=float)
        allowed = interior_band(grid, margin)
        c[~allowed] = 0.0
        return VectorField(grid, c, margin)


def interior_band(grid: Grid, margin: int) -> np.ndarray:
    """Nodes whose Chebyshev distance to the complement of the mask exceeds `margin`."""
    ok = grid.inside_mask.copy()
    for _ in range(margin):
        eroded = ok.copy()
        for axis in range(grid.dimension):
            eroded &= np.roll(ok, 1, axis=axis)
            eroded &= np.roll(ok, -1, axis=axis)
        if grid.dimension == 2:
            for sx in (1, -1):
                for sy in (1, -1):
                    eroded &= np.roll(np.roll(ok, sx, axis=0), sy, axis=1)
        ok = eroded
    return ok


def _as_tuple(value, dim: int, name: str):
    if np.isscalar(value):
        return (value,) * dim
    t = tuple(value)
    if len(t) != dim:
        raise ValueError(f"{name} must have {dim} entries, got {len(t)}")
    return t


def build_grid(geometry, resolution) -> Grid:
    """Discretize a box (or disk-masked box) with `resolution` nodes per axis.

    The spacing h must come out identical along every axis, i.e. the extents
    and node counts must satisfy extent = (nodes - 1) * h with a common h.
    """
    if isinstance(geometry, DiskGeometry):
        if geometry.radius <= 0:
            raise ValueError("disk radius must be positive")
        extents = geometry.extents or (2.0 * geometry.radius,) * 2
        dim = len(extents)
        base = build_grid(BoxGeometry(tuple(extents), geometry.origin), resolution)
        center = geometry.center or tuple(
            base.origin[a] + 0.5 * extents[a] for a in range(dim)
        )
        pts = base.node_coords()
        dist2 = np.zeros(base.nodes)
        for a in range(dim):
            dist2 += (pts[..., a] - center[a]) ** 2
        mask = base.inside_mask & (dist2 < geometry.radius**2)
        return Grid(dim, base.extents, base.nodes, base.h, base.origin, mask)

    if not isinstance(geometry, BoxGeometry):
        raise TypeError(f"unsupported geometry {type(geometry).__name__}")

    extents = tuple(float(e) for e in geometry.extents)
    dim = len(extents)
    if dim not in (1, 2):
        raise ValueError("only 1D and 2D grids are supported")
    if any(e <= 0 for e in extents):
        raise ValueError("extents must be positive")
    nodes = _as_tuple(resolution, dim, "resolution")
    nodes = tuple(int(n) for n in nodes)
    if any(n < 3 for n in nodes):
        raise ValueError("resolution must be at least 3 nodes per axis")
    spacings = [extents[a] / (nodes[a] - 1) for a in range(dim)]
    h = spacings[0]
    if any(abs(s - h) > _REL_TOL * h for s in spacings[1:]):
        raise ValueError(f"non-uniform spacing {spacings}; extents and resolution must agree")
    origin = tuple(float(o) for o in (geometry.origin or (0.0,) * dim))
    if len(origin) != dim:
        raise ValueError("origin dimension mismatch")

    mask = np.ones(nodes, dtype=bool)
    for a in range(dim):
        idx = [slice(None)] * dim
        idx[a] = 0
        mask[tuple(idx)] = False
        idx[a] = nodes[a] - 1
        mask[tuple(idx)] = False
    return Grid(dim, extents, nodes, h, origin, mask)


def dirichlet_energy(f: ScalarField) -> float:
    """Discrete integral of |grad f|^2: forward-difference link sum, h^d weighted.

    Links into the zero exterior are counted, so the value equals u^T A u h^d
    for the masked Laplacian A and in particular matches eigenvalues exactly
    on eigenfunctions.
    """
    v = f.values
    h = f.grid.h
    d = f.grid.dimension
    total = 0.0
    for axis in range(d):
        diff = np.diff(v, axis=axis)
        total += float(np.sum(diff * diff))
    return total * h ** (d - 2)


def l2_inner(f: ScalarField, g: ScalarField) -> float:
    """L2 inner product sum(f*g) * h^d over the grid."""
    if not f.grid.same_as(g.grid):
        raise ValueError("fields live on different grids")
    return float(np.sum(f.values * g.values)) * f.grid.h**f.grid.dimension


def l2_norm(f: ScalarField) -> float:
    return math.sqrt(max(l2_inner(f, f), 0.0))


def sample_field(f: ScalarField, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of the zero-extended field at arbitrary points.

    Points outside the box sample the implicit zero extension.
    """
    g = f.grid
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, g.dimension)
    n = flat.shape[0]
    result = np.zeros(n)

    rel = np.empty_like(flat)
    for a in range(g.dimension):
        rel[:, a] = (flat[:, a] - g.origin[a]) / g.h
    base = np.floor(rel).astype(int)
    frac = rel - base

    def node_values(idx):
        ok = np.ones(n, dtype=bool)
        for a in range(g.dimension):
            ok &= (idx[:, a] >= 0) & (idx[:, a] < g.nodes[a])
        out = np.zeros(n)
        clipped = np.clip(idx, 0, np.array(g.nodes) - 1)
        vals = f.values[tuple(clipped[:, a] for a in range(g.dimension))]
        out[ok] = vals[ok]
        return out

    if g.dimension == 1:
        v0 = node_values(base)
        v1 = node_values(base + 1)
        result = v0 * (1 - frac[:, 0]) + v1 * frac[:, 0]
    else:
        for dx in (0, 1):
            for dy in (0, 1):
                idx = base + np.array([dx, dy])
                w = (frac[:, 0] if dx else 1 - frac[:, 0]) * (
                    frac[:, 1] if dy else 1 - frac[:, 1]
                )
                result += w * node_values(idx)
    return result.reshape(pts.shape[:-1])


def sphere_average(f: ScalarField, center, r: float, samples: int = 64) -> float:
    """Average of f over the sphere of radius r: equi-angular samples in 2D,
    the two endpoints in 1D, bilinearly interpolated.  Exact on affine fields."""
    g = f.grid
    center = np.asarray(center, dtype=float)
    if r < 2 * g.h:
        raise ValueError(f"sphere radius {r} below 2h = {2 * g.h}")
    for a in range(g.dimension):
        lo = g.origin[a]
        hi = g.origin[a] + g.extents[a]
        if center[a] - r < lo - _REL_TOL or center[a] + r > hi + _REL_TOL:
            raise ValueError("sphere leaves the box")
    if g.dimension == 1:
        pts = np.array([[center[0] - r], [center[0] + r]])
    else:
        theta = 2 * np.pi * np.arange(samples) / samples
        pts = center[None, :] + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return float(np.mean(sample_field(f, pts)))


def gradient_field(f: ScalarField) -> np.ndarray:
    """Nodal gradient, shape (*nodes, d): centered differences inside the mask,
    one-sided where a neighbor leaves the mask, zero outside."""
    g = f.grid
    v = f.values
    h = g.h
    inside = g.inside_mask
    grad = np.zeros(g.nodes + (g.dimension,))
    for axis in range(g.dimension):
        vp = np.roll(v, -1, axis=axis)
        vm = np.roll(v, 1, axis=axis)
        mp = np.roll(inside, -1, axis=axis)
        mm = np.roll(inside, 1, axis=axis)
        # roll wraps around; the outermost layer is masked out so wrapped
        # neighbors are never flagged inside for interior nodes
        centered = (vp - vm) / (2 * h)
        fwd = (vp - v) / h
        bwd = (v - vm) / h
        comp = np.where(mp & mm, centered, np.where(mp, fwd, np.where(mm, bwd, 0.0)))
        grad[..., axis] = np.where(inside, comp, 0.0)
    return grad


# ---------------------------------------------------------------------------
# field dump format: CSV with header ix[,iy],value plus a JSON grid sidecar


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_field_csv(path, f: ScalarField) -> None:
    g = f.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if g.dimension == 1:
            w.writerow(["ix", "value"])
            for ix in range(g.nodes[0]):
                w.writerow([ix, _fmt(f.values[ix])])
        else:
            w.writerow(["ix", "iy", "value"])
            for ix in range(g.nodes[0]):
                for iy in range(g.nodes[1]):
                    w.writerow([ix, iy, _fmt(f.values[ix, iy])])


def read_field_csv(path, grid: Grid) -> ScalarField:
    values = np.zeros(grid.nodes)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if len(header) != grid.dimension + 1:
            raise ValueError(f"field file {path} does not match grid dimension")
        for row in r:
            idx = tuple(int(c) for c in row[:-1])
            values[idx] = float(row[-1])
    return ScalarField.from_values(grid, values)


def write_grid_json(path, grid: Grid, geometry_info: dict | None = None) -> None:
    meta = {
        "dimension": grid.dimension,
        "extents": list(grid.extents),
        "nodes": list(grid.nodes),
        "h": grid.h,
        "origin": list(grid.origin),
    }
    if geometry_info:
        meta["geometry"] = geometry_info
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_grid_json(path) -> Grid:
    with open(Path(path)) as fh:
        meta = json.load(fh)
    geom = meta.get("geometry", {})
    if geom.get("kind") == "disk":
        geometry = DiskGeometry(
            radius=geom["radius"],
            extents=tuple(meta["extents"]),
            origin=tuple(meta["origin"]),
            center=tuple(geom["center"]) if geom.get("center") else None,
        )
    else:
        geometry = BoxGeometry(tuple(meta["extents"]), tuple(meta["origin"]))
    return build_grid(geometry, tuple(meta["nodes"]))
