import math

import numpy as np
import pytest

from sso.grid import BoxGeometry, ScalarField, build_grid, l2_inner, l2_norm
from sso.eigensolver import (
    EmptyDomainError,
    rayleigh_quotient,
    smallest_eigenpairs,
)


def discrete_square_eigenvalue(m, n, h):
    return (4 / h**2) * (math.sin(math.pi * m * h / 2) ** 2 + math.sin(math.pi * n * h / 2) ** 2)


def test_unit_square_spectrum():
    g = build_grid(BoxGeometry((1.0, 1.0)), 65)
    res = smallest_eigenpairs(g, g.inside_mask, k=2)
    h = g.h
    assert res.eigenvalues[0] == pytest.approx(discrete_square_eigenvalue(1, 1, h), rel=1e-7)
    assert res.eigenvalues[1] == pytest.approx(discrete_square_eigenvalue(1, 2, h), rel=1e-7)
    # continuum values 2 pi^2 and 5 pi^2 within half a percent
    assert res.eigenvalues[0] == pytest.approx(2 * math.pi**2, rel=5e-3)
    assert res.eigenvalues[1] == pytest.approx(5 * math.pi**2, rel=5e-3)


def test_interval_lambda1():
    g = build_grid(BoxGeometry((1.0,)), 257)
    res = smallest_eigenpairs(g, g.inside_mask, k=1)
    assert res.eigenvalues[0] == pytest.approx(math.pi**2, rel=1e-4)


def test_result_normalization_and_residuals():
    g = build_grid(BoxGeometry((1.0, 1.0)), 33)
    res = smallest_eigenpairs(g, g.inside_mask, k=2, tol=1e-9)
    from sso.eigensolver import apply_laplacian

    for lam, f in zip(res.eigenvalues, res.eigenfunctions):
        assert l2_norm(f) == pytest.approx(1.0, abs=1e-10)
        resid = apply_laplacian(g, f.values, g.inside_mask) - lam * f.values
        rel = np.linalg.norm(resid[g.inside_mask]) * g.h / abs(lam)
        assert rel <= 1e-8
    assert abs(l2_inner(res.eigenfunctions[0], res.eigenfunctions[1])) <= 1e-8


def test_two_equal_intervals_degenerate_pair():
    g = build_grid(BoxGeometry((6.0,)), 601)
    x = g.axis_coords(0)
    ell = 2.0
    mask = g.inside_mask & (((x > 0.5) & (x < 0.5 + ell)) | ((x > 3.5) & (x < 3.5 + ell)))
    res = smallest_eigenpairs(g, mask, k=2)
    lam_exact = math.pi**2 / ell**2
    assert res.eigenvalues[0] == pytest.approx(lam_exact, rel=1e-3)
    assert res.eigenvalues[1] == pytest.approx(lam_exact, rel=1e-3)
    # localized basis: each eigenfunction on one component
    left = x < 3.0
    for f in res.eigenfunctions:
        mass_left = float(np.sum(f.values[left] ** 2))
        mass_right = float(np.sum(f.values[~left] ** 2))
        assert min(mass_left, mass_right) / max(mass_left, mass_right) < 1e-8


def test_union_second_eigenvalue_matches_per_component():
    g = build_grid(BoxGeometry((6.0,)), 601)
    x = g.axis_coords(0)
    m1 = g.inside_mask & (x > 0.5) & (x < 2.5)
    m2 = g.inside_mask & (x > 3.5) & (x < 5.0)
    lam_a = smallest_eigenpairs(g, m1, k=2).eigenvalues
    lam_b = smallest_eigenpairs(g, m2, k=2).eigenvalues
    union = smallest_eigenpairs(g, m1 | m2, k=2).eigenvalues
    merged = sorted(list(lam_a) + list(lam_b))[:2]
    assert union[0] == pytest.approx(merged[0], rel=1e-8)
    assert union[1] == pytest.approx(merged[1], rel=1e-8)


def test_domain_monotonicity():
    g = build_grid(BoxGeometry((1.0, 1.0)), 49)
    rng = np.random.default_rng(2)
    x = g.node_coords()
    big = g.inside_mask & (x[..., 0] > 0.1)
    lam_big = smallest_eigenpairs(g, big, k=1).eigenvalues[0]
    for _ in range(3):
        # random subset: carve a random half-plane slice out of the big mask
        d = rng.uniform(0.2, 0.5)
        theta = rng.uniform(0, 2 * math.pi)
        small = big & ((x[..., 0] - 0.5) * math.cos(theta) + (x[..., 1] - 0.5) * math.sin(theta) < d)
        if small.sum() < 9:
            continue
        lam_small = smallest_eigenpairs(g, small, k=1).eigenvalues[0]
        assert lam_small >= lam_big - 1e-9 * abs(lam_big)


def test_variational_bound_for_nonnegative_fields():
    g = build_grid(BoxGeometry((1.0,)), 129)
    rng = np.random.default_rng(3)
    lam1 = smallest_eigenpairs(g, g.inside_mask, k=1).eigenvalues[0]
    for _ in range(5):
        vals = np.abs(rng.standard_normal(g.nodes)) + 0.01
        v = ScalarField.from_values(g, vals)
        assert rayleigh_quotient(v) >= lam1 - 1e-9 * lam1


def test_rayleigh_quotient_cases():
    g = build_grid(BoxGeometry((1.0,)), 257)
    f = ScalarField.from_callable(g, lambda p: np.sin(np.pi * p[..., 0]))
    assert rayleigh_quotient(f) == pytest.approx(math.pi**2, rel=1e-4)
    assert math.isinf(rayleigh_quotient(ScalarField.zeros(g)))
    res = smallest_eigenpairs(g, g.inside_mask, k=1)
    u1 = res.eigenfunctions[0]
    u1 = ScalarField.from_values(g, np.abs(u1.values))
    assert rayleigh_quotient(u1) == pytest.approx(res.eigenvalues[0], rel=1e-12)
    with pytest.raises(ValueError):
        rayleigh_quotient(ScalarField.from_callable(g, lambda p: p[..., 0] - 0.5))


def test_rayleigh_scale_invariance():
    g = build_grid(BoxGeometry((1.0,)), 65)
    rng = np.random.default_rng(4)
    v = ScalarField.from_values(g, np.abs(rng.standard_normal(g.nodes)))
    base = rayleigh_quotient(v)
    for alpha in (0.01, 3.7, 1e6):
        scaled = ScalarField.from_values(g, alpha * v.values)
        assert rayleigh_quotient(scaled) == pytest.approx(base, rel=1e-12)


def test_empty_domain_error():
    g = build_grid(BoxGeometry((1.0,)), 33)
    with pytest.raises(EmptyDomainError, match="empty domain"):
        smallest_eigenpairs(g, np.zeros(g.nodes, dtype=bool), k=1)
