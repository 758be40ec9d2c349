"""First variations along interior vector fields and the stationarity residual.

The Rayleigh-quotient variation is the volume integral
    int (|grad u|^2 - lam u^2) div(xi) - 2 grad(u) . Dxi . grad(u) dx
and the support-volume variation is int_{|u|>tau} div(xi) dx, both by centered
differences and nodal quadrature.  A bilinear-interpolation composition oracle
provides the independent finite-difference check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    VectorField,
    gradient_field,
    interior_band,
    l2_norm,
    sample_field,
)
from .eigensolver import rayleigh_quotient

__all__ = [
    "StationarityReport",
    "first_variation_rayleigh",
    "first_variation_volume",
    "stationarity_residual",
    "divergence",
    "jacobian",
    "composed_field",
    "fd_rayleigh_variation",
    "random_smooth_vector_field",
    "random_smooth_scalar_field",
]


@dataclass(frozen=True)
class StationarityReport:
    rayleigh_variation_plus: float
    rayleigh_variation_minus: float
    volume_variation_plus: float
    volume_variation_minus: float
    combined_residual: float


def _component_gradient(grid: Grid, comp: np.ndarray) -> np.ndarray:
    """Centered-difference gradient of one vector-field component; the field
    vanishes near the boundary so plain interior differences suffice."""
    out = np.zeros(grid.nodes + (grid.dimension,))
    for axis in range(grid.dimension):
        vp = np.roll(comp, -1, axis=axis)
        vm = np.roll(comp, 1, axis=axis)
        out[..., axis] = (vp - vm) / (2 * grid.h)
    # wrapped values at the outermost layer are irrelevant: zero them
    edge = np.zeros(grid.nodes, dtype=bool)
    for axis in range(grid.dimension):
        sl = [slice(None)] * grid.dimension
        sl[axis] = 0
        edge[tuple(sl)] = True
        sl[axis] = -1
        edge[tuple(sl)] = True
    out[edge] = 0.0
    return out


def divergence(xi: VectorField) -> np.ndarray:
    g = xi.grid
    div = np.zeros(g.nodes)
    for i in range(g.dimension):
        div += _component_gradient(g, xi.components[..., i])[..., i]
    return div


def jacobian(xi: VectorField) -> np.ndarray:
    """D(xi) with entries J[..., i, j] = d xi_i / d x_j."""
    g = xi.grid
    J = np.zeros(g.nodes + (g.dimension, g.dimension))
    for i in range(g.dimension):
        J[..., i, :] = _component_gradient(g, xi.components[..., i])
    return J


def first_variation_rayleigh(u: ScalarField, lam: float, xi: VectorField) -> float:
    """Variation of the Rayleigh quotient of the unit-norm field u along xi."""
    if not u.grid.same_as(xi.grid):
        raise ValueError("field and vector field live on different grids")
    norm = l2_norm(u)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"first_variation_rayleigh expects a unit-norm field, got {norm}")
    g = gradient_field(u)
    grad_sq = np.sum(g * g, axis=-1)
    div = divergence(xi)
    J = jacobian(xi)
    cross = np.einsum("...i,...ij,...j->...", g, J, g)
    integrand = (grad_sq - lam * u.values**2) * div - 2.0 * cross
    return float(np.sum(integrand)) * u.grid.h**u.grid.dimension


def first_variation_volume(u: ScalarField, xi: VectorField, tau: float = 0.0) -> float:
    """Variation of |{|u| > tau}| along xi: the divergence integrated over the support."""
    if not u.grid.same_as(xi.grid):
        raise ValueError("field and vector field live on different grids")
    div = divergence(xi)
    support = np.abs(u.values) > tau
    return float(np.sum(div[support])) * u.grid.h**u.grid.dimension


def stationarity_residual(state, xi: VectorField) -> StationarityReport:
    """Residual of a+ dR(u+) + a- dR(u-) + lam (dVol(u+) + dVol(u-)) for a
    solver state; small values certify discrete criticality."""
    if abs(state.a_plus + state.a_minus - 1.0) > 1e-6:
        raise ValueError("phase coefficients must sum to one")
    up, um = state.phase_fields()
    rv_p = first_variation_rayleigh(up, state.lambda1_plus, xi)
    rv_m = first_variation_rayleigh(um, state.lambda1_minus, xi)
    vv_p = first_variation_volume(up, xi)
    vv_m = first_variation_volume(um, xi)
    combined = state.a_plus * rv_p + state.a_minus * rv_m + state.lam * (vv_p + vv_m)
    return StationarityReport(rv_p, rv_m, vv_p, vv_m, combined)


# ---------------------------------------------------------------------------
# finite-difference oracle


def composed_field(u: ScalarField, xi: VectorField, t: float) -> ScalarField:
    """u composed with the first-order inverse flow x -> x - t xi(x),
    sampled by bilinear interpolation."""
    g = u.grid
    pts = g.node_coords() - t * xi.components
    vals = sample_field(u, pts)
    return ScalarField.from_values(g, vals)


def fd_rayleigh_variation(u: ScalarField, xi: VectorField, t: float = 1e-4) -> float:
    """Central finite difference of t -> R(u o Phi_t); independent oracle for
    first_variation_rayleigh."""
    rp = rayleigh_quotient(composed_field(u, xi, t).positive_part())
    rm = rayleigh_quotient(composed_field(u, xi, -t).positive_part())
    return (rp - rm) / (2 * t)


# ---------------------------------------------------------------------------
# smooth compactly supported test data


def _envelope(grid: Grid, margin: int) -> np.ndarray:
    """C^2 window: exactly zero within `margin` nodes of the boundary, one in
    the deep interior, quintic smoothstep ramp in between."""
    import scipy.ndimage

    dist = scipy.ndimage.distance_transform_edt(grid.inside_mask) * grid.h
    lo = margin * grid.h
    width = max(4 * grid.h, 0.15 * min(grid.extents))
    t = np.clip((dist - lo) / width, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def random_smooth_scalar_field(grid: Grid, rng: np.random.Generator, n_modes: int = 3) -> ScalarField:
    """Random low-frequency trigonometric field times a boundary window."""
    pts = grid.node_coords()
    vals = np.zeros(grid.nodes)
    for _ in range(n_modes):
        k = rng.uniform(0.5, 2.5, size=grid.dimension) * np.pi / np.array(grid.extents).max()
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.3, 1.0)
        arg = phase
        for a in range(grid.dimension):
            arg = arg + k[a] * pts[..., a] * rng.uniform(1.0, 3.0)
        vals += amp * np.sin(arg)
    vals *= _envelope(grid, margin=2)
    return ScalarField.from_values(grid, vals)


def random_smooth_vector_field(
    grid: Grid, rng: np.random.Generator, margin: int = 2, n_modes: int = 3
) -> VectorField:
    comps = np.zeros(grid.nodes + (grid.dimension,))
    for a in range(grid.dimension):
        comps[..., a] = random_smooth_scalar_field(grid, rng, n_modes).values
    env = _envelope(grid, margin)
    comps *= env[..., None]
    return VectorField.from_components(grid, comps, margin=margin)
