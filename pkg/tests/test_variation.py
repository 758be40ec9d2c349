import math

import numpy as np
import pytest

from sso.grid import (
    BoxGeometry,
    DiskGeometry,
    ScalarField,
    VectorField,
    build_grid,
    dirichlet_energy,
    l2_inner,
    l2_norm,
)
from sso.eigensolver import smallest_eigenpairs
from sso.variation import (
    fd_rayleigh_variation,
    first_variation_rayleigh,
    first_variation_volume,
    random_smooth_vector_field,
    stationarity_residual,
)


def unit_norm(field: ScalarField) -> ScalarField:
    return ScalarField.from_values(field.grid, field.values / l2_norm(field))


def smooth_1d_test_field(grid):
    pts = grid.node_coords()
    vals = np.sin(np.pi * pts[..., 0] / grid.extents[0]) * (
        1.0 + 0.35 * np.sin(1.3 * pts[..., 0] + 0.4)
    )
    return unit_norm(ScalarField.from_values(grid, vals))


def test_zero_vector_field_gives_zero():
    g = build_grid(BoxGeometry((1.0,)), 129)
    u = smooth_1d_test_field(g)
    lam = dirichlet_energy(u) / l2_inner(u, u)
    xi = VectorField.from_components(g, np.zeros(g.nodes + (1,)))
    assert first_variation_rayleigh(u, lam, xi) == 0.0
    assert first_variation_volume(u, xi) == 0.0


def test_translation_invariance_of_interior_eigenfunction():
    # eigenfunction of a disk strictly inside the box, constant field around it:
    # the integrand vanishes identically where the field varies
    g = build_grid(BoxGeometry((2.0, 2.0)), 129)
    pts = g.node_coords()
    disk = g.inside_mask & ((pts[..., 0] - 1.0) ** 2 + (pts[..., 1] - 1.0) ** 2 < 0.45**2)
    res = smallest_eigenpairs(g, disk, k=1)
    u = res.eigenfunctions[0]
    comps = np.zeros(g.nodes + (2,))
    d2 = (pts[..., 0] - 1.0) ** 2 + (pts[..., 1] - 1.0) ** 2
    bump = np.clip((0.9**2 - d2) / (0.9**2 - 0.6**2), 0.0, 1.0)
    comps[..., 0] = bump
    comps[..., 1] = 0.5 * bump
    xi = VectorField.from_components(g, comps, margin=2)
    assert abs(first_variation_rayleigh(u, res.eigenvalues[0], xi)) < 1e-4


def test_rejects_unnormalized_field():
    g = build_grid(BoxGeometry((1.0,)), 65)
    u = ScalarField.from_callable(g, lambda p: np.sin(np.pi * p[..., 0]))
    xi = VectorField.from_components(g, np.zeros(g.nodes + (1,)))
    with pytest.raises(ValueError, match="unit-norm"):
        first_variation_rayleigh(u, 1.0, xi)


def test_fd_consistency_10_random_fields():
    g = build_grid(BoxGeometry((1.0,)), 2049)
    u = smooth_1d_test_field(g)
    lam = dirichlet_energy(u) / l2_inner(u, u)
    rng = np.random.default_rng(7)
    for _ in range(10):
        xi = random_smooth_vector_field(g, rng)
        exact = first_variation_rayleigh(u, lam, xi)
        fd = fd_rayleigh_variation(u, xi)
        assert abs(exact - fd) <= 1e-3 * abs(fd)


def test_fd_consistency_2d():
    # the 2D quadrature carries a larger h^2 constant; checked at its own scale
    g = build_grid(BoxGeometry((1.0, 1.0)), 257)
    pts = g.node_coords()
    vals = np.sin(np.pi * pts[..., 0]) * np.sin(np.pi * pts[..., 1]) * (
        1.0 + 0.35 * np.sin(2.1 * pts[..., 0] + 0.5) * np.cos(1.3 * pts[..., 1])
    )
    u = unit_norm(ScalarField.from_values(g, vals))
    lam = dirichlet_energy(u) / l2_inner(u, u)
    rng = np.random.default_rng(11)
    for _ in range(5):
        xi = random_smooth_vector_field(g, rng)
        exact = first_variation_rayleigh(u, lam, xi)
        fd = fd_rayleigh_variation(u, xi)
        assert abs(exact - fd) <= 3e-2 * abs(fd)


def test_linearity_in_xi():
    g = build_grid(BoxGeometry((1.0,)), 257)
    u = smooth_1d_test_field(g)
    lam = dirichlet_energy(u) / l2_inner(u, u)
    rng = np.random.default_rng(3)
    xi1 = random_smooth_vector_field(g, rng)
    xi2 = random_smooth_vector_field(g, rng)
    xi_sum = VectorField.from_components(g, xi1.components + xi2.components)
    a = first_variation_rayleigh(u, lam, xi1) + first_variation_rayleigh(u, lam, xi2)
    b = first_variation_rayleigh(u, lam, xi_sum)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)
    va = first_variation_volume(u, xi1) + first_variation_volume(u, xi2)
    vb = first_variation_volume(u, xi_sum)
    assert va == pytest.approx(vb, rel=1e-10, abs=1e-12)


def test_volume_variation_divergence_free():
    g = build_grid(BoxGeometry((2.0, 2.0), origin=(-1.0, -1.0)), 129)
    pts = g.node_coords()
    u = ScalarField.from_values(g, np.where(g.inside_mask, 1.0, 0.0))
    # rotational field: divergence-free
    comps = np.zeros(g.nodes + (2,))
    window = np.clip(1.0 - (pts[..., 0] ** 2 + pts[..., 1] ** 2) / 0.8**2, 0, 1)
    comps[..., 0] = -pts[..., 1] * window
    comps[..., 1] = pts[..., 0] * window
    xi = VectorField.from_components(g, comps, margin=2)
    assert abs(first_variation_volume(u, xi)) < 1e-10


def test_volume_variation_disk_value():
    # support = unit disk, field = identity near the disk: integral of div x = 2 pi
    g = build_grid(BoxGeometry((3.0, 3.0), origin=(-1.5, -1.5)), 385)
    pts = g.node_coords()
    r2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
    u = ScalarField.from_values(g, np.where(g.inside_mask & (r2 < 1.0), 1.0, 0.0))
    bump = np.clip((1.44 - r2) / (1.44 - 1.0), 0.0, 1.0)
    bump = np.where(r2 <= 1.0, 1.0, bump)
    comps = np.stack([pts[..., 0] * bump, pts[..., 1] * bump], axis=-1)
    xi = VectorField.from_components(g, comps, margin=2)
    assert first_variation_volume(u, xi) == pytest.approx(2 * math.pi, rel=0.01)


def test_stationarity_residual_converged_vs_perturbed(run_1d_multiphase, grid_1d):
    state = run_1d_multiphase
    g = grid_1d
    rng = np.random.default_rng(17)
    xi = random_smooth_vector_field(g, rng)
    rep = stationarity_residual(state, xi)
    scale = abs(rep.rayleigh_variation_plus) + state.lam * abs(rep.volume_variation_plus) + 1.0
    assert abs(rep.combined_residual) <= 1e-2 * scale

    # a deliberately suboptimal state: both intervals too short
    from sso.optimizer import SolverConfig, initialize

    bad = initialize(SolverConfig(lam=1.0, seed=0, init_radius=0.6), g)
    rep_bad = stationarity_residual(bad, xi)
    assert abs(rep_bad.combined_residual) >= 10 * abs(rep.combined_residual)


def test_stationarity_zero_field(run_1d_multiphase, grid_1d):
    xi = VectorField.from_components(grid_1d, np.zeros(grid_1d.nodes + (1,)))
    rep = stationarity_residual(run_1d_multiphase, xi)
    assert rep.combined_residual == 0.0
    assert rep.rayleigh_variation_plus == 0.0
    assert rep.volume_variation_minus == 0.0


def test_stationarity_rejects_bad_coefficients(run_1d_multiphase, grid_1d):
    import dataclasses

    xi = VectorField.from_components(grid_1d, np.zeros(grid_1d.nodes + (1,)))
    broken = dataclasses.replace(run_1d_multiphase, a_plus=0.7, a_minus=0.2)
    with pytest.raises(ValueError, match="sum to one"):
        stationarity_residual(broken, xi)
