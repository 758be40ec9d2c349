import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sso.grid import BoxGeometry, DiskGeometry, ScalarField, build_grid
from sso.functional import (
    DegeneratePhaseError,
    coefficients_a,
    f_lambda,
    j_infty,
    j_p,
    objective_relaxed,
    smoothed_volume,
    support_measure,
)

positive = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)


def test_j_infty_basics():
    assert j_infty(3.0, 4.0) == 4.0
    assert j_infty(5.0, 5.0) == 5.0
    assert j_infty(0.0, 7.0) == 7.0
    with pytest.raises(ValueError):
        j_infty(-1.0, 2.0)


def test_j_p_values():
    assert j_p(1.0, 1.0, 2.0) == pytest.approx(math.sqrt(2), rel=1e-14)
    assert j_p(3.0, 0.0, 7.5) == 3.0
    v = j_p(3.0, 4.0, 16.0)
    assert 4.0 <= v <= 4.0 * 2 ** (1 / 16)
    assert v == pytest.approx((3**16 + 4**16) ** (1 / 16.0), rel=1e-12)
    with pytest.raises(ValueError):
        j_p(1.0, 1.0, 1.0)


def test_j_p_no_overflow_for_large_p():
    assert j_p(1e200, 1e200, 512.0) == pytest.approx(1e200 * 2 ** (1 / 512), rel=1e-12)


@given(x=positive, y=positive, p=st.floats(1.01, 60))
@settings(max_examples=200, deadline=None)
def test_j_p_sandwich(x, y, p):
    ji = j_infty(x, y)
    jp = j_p(x, y, p)
    assert ji <= jp * (1 + 1e-13)
    assert jp <= 2 ** (1 / p) * ji * (1 + 1e-13)


@given(x=positive, y=positive, p=st.floats(1.2, 20))
@settings(max_examples=100, deadline=None)
def test_j_p_decreasing_in_p(x, y, p):
    assert j_p(x, y, p + 0.5) <= j_p(x, y, p) * (1 + 1e-12)
    # large p approaches the max
    assert j_p(x, y, 400.0) == pytest.approx(j_infty(x, y), rel=2e-3)


def test_coefficients_examples():
    ap, am = coefficients_a(2.0, 2.0, 2.0)
    assert ap == pytest.approx(2**-0.5, rel=1e-12)
    assert am == pytest.approx(2**-0.5, rel=1e-12)
    ap, am = coefficients_a(1.0, 2.0, 2.0)
    assert ap == pytest.approx(1 / math.sqrt(5), rel=1e-12)
    assert am == pytest.approx(2 / math.sqrt(5), rel=1e-12)
    ap, am = coefficients_a(3.7, 3.7, 4096.0)
    assert ap == pytest.approx(0.5, rel=1e-3)
    assert ap + am == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        coefficients_a(0.0, 1.0, 2.0)


@given(rp=positive, rm=positive, p=st.floats(1.1, 40))
@settings(max_examples=200, deadline=None)
def test_coefficients_identity(rp, rm, p):
    ap, am = coefficients_a(rp, rm, p)
    q = p / (p - 1)
    assert abs(ap**q + am**q - 1.0) <= 1e-12


def test_support_measure_counting():
    g = build_grid(BoxGeometry((1.0,)), 101)
    vals = np.zeros(g.nodes)
    vals[10:17] = 2.0
    v = ScalarField.from_values(g, vals)
    assert support_measure(v) == pytest.approx(7 * g.h)
    assert support_measure(v, threshold=3.0) == 0.0
    assert support_measure(ScalarField.zeros(g)) == 0.0


def test_support_measure_two_plane_on_disk():
    g = build_grid(DiskGeometry(radius=1.0, extents=(2.0, 2.0)), 129)
    nu = np.array([math.cos(0.4), math.sin(0.4)])
    f = ScalarField.from_callable(
        g, lambda p: 1.5 * np.maximum((p - 1.0) @ nu, 0) - 0.5 * np.maximum(-((p - 1.0) @ nu), 0)
    )
    assert support_measure(f) == pytest.approx(math.pi, rel=0.05)


def test_smoothed_volume_limits():
    g = build_grid(BoxGeometry((1.0,)), 101)
    vals = np.zeros(g.nodes)
    vals[20:40] = 1.0
    v = ScalarField.from_values(g, vals)
    assert smoothed_volume(ScalarField.zeros(g), 0.1) == 0.0
    sv = smoothed_volume(v, 1e-6)
    assert sv <= support_measure(v) and sv == pytest.approx(support_measure(v), rel=1e-9)


@given(e1=st.floats(1e-4, 1.0), e2=st.floats(1e-4, 1.0))
@settings(max_examples=50, deadline=None)
def test_smoothed_volume_monotone_in_eps(e1, e2):
    g = build_grid(BoxGeometry((1.0,)), 65)
    rng = np.random.default_rng(0)
    v = ScalarField.from_values(g, rng.standard_normal(g.nodes))
    lo, hi = sorted((e1, e2))
    assert smoothed_volume(v, lo) >= smoothed_volume(v, hi) - 1e-12
    assert smoothed_volume(v, lo) <= support_measure(v) + 1e-12


def test_objective_relaxed_breakdown():
    g = build_grid(BoxGeometry((6.0,)), 301)
    x = g.node_coords()[..., 0]
    vals = np.where((x > 1) & (x < 2), np.sin(math.pi * (x - 1)), 0.0) - np.where(
        (x > 4) & (x < 5), np.sin(math.pi * (x - 4)), 0.0
    )
    v = ScalarField.from_values(g, vals)
    bd = objective_relaxed(v, None, p=4.0, lam=2.0, eps=1e-8)
    from sso.eigensolver import rayleigh_quotient

    rp = rayleigh_quotient(v.positive_part())
    rm = rayleigh_quotient(v.negative_part())
    assert bd.coupling == pytest.approx(j_p(rp, rm, 4.0), rel=1e-12)
    assert bd.total == pytest.approx(bd.coupling + 2.0 * bd.volume + 0.0, rel=1e-12)
    assert bd.fidelity == 0.0
    # identical reference field kills the fidelity term
    bd2 = objective_relaxed(v, v, p=4.0, lam=2.0, eps=1e-8, fidelity_weight=3.0)
    assert bd2.fidelity == 0.0
    # zero weight makes the total independent of the reference
    other = ScalarField.from_values(g, 0.5 * vals)
    bd3 = objective_relaxed(v, other, p=4.0, lam=2.0, eps=1e-8, fidelity_weight=0.0)
    assert bd3.total == pytest.approx(bd.total, rel=1e-12)


def test_objective_relaxed_degenerate_phase():
    g = build_grid(BoxGeometry((1.0,)), 65)
    v = ScalarField.from_callable(g, lambda p: np.sin(np.pi * p[..., 0]))
    with pytest.raises(DegeneratePhaseError, match="degenerate phase"):
        objective_relaxed(v, None, p=2.0, lam=1.0, eps=1e-3)


def test_f_lambda_two_intervals():
    g = build_grid(BoxGeometry((6.0,)), 601)
    x = g.axis_coords(0)
    ell = math.pi ** (2.0 / 3.0)
    mask = g.inside_mask & (
        ((x > 0.9) & (x < 0.9 + ell)) | ((x > 3.0) & (x < 3.0 + ell))
    )
    value = f_lambda(g, mask, lam=1.0)
    assert value == pytest.approx(3 * math.pi ** (2.0 / 3.0), rel=0.01)


def test_f_lambda_unit_square_lambda0():
    g = build_grid(BoxGeometry((1.0, 1.0)), 65)
    assert f_lambda(g, g.inside_mask, lam=0.0) == pytest.approx(5 * math.pi**2, rel=5e-3)


def test_f_lambda_linear_in_lam():
    g = build_grid(BoxGeometry((1.0, 1.0)), 33)
    vol = g.n_inside * g.h**2
    v1 = f_lambda(g, g.inside_mask, lam=1.0)
    v2 = f_lambda(g, g.inside_mask, lam=2.0)
    assert v2 - v1 == pytest.approx(vol, rel=1e-9)
