"""Computable free-boundary diagnostics: blow-up rescalings, the boundary
adjusted (Weiss) energy and its radius scan, two-plane fits of blow-up limits,
slope identities, nondegeneracy ratios, the three-phase monotonicity product,
the potential estimate pair, and the aggregate identity suite.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.ndimage
import scipy.sparse.linalg

from .grid import (
    BoxGeometry,
    Grid,
    ScalarField,
    build_grid,
    dirichlet_energy,
    gradient_field,
    l2_inner,
    l2_norm,
    sample_field,
    sphere_average,
)
from .eigensolver import masked_laplacian, smallest_eigenpairs
from .optimizer import PhaseState, _chebyshev_dilate

__all__ = [
    "WeissCurve",
    "TwoPlaneFit",
    "DiagnosticsReport",
    "reference_ball_grid",
    "blow_up",
    "weiss_energy",
    "weiss_scan",
    "fit_two_plane",
    "slope_identity_residual",
    "nondegeneracy_eta",
    "three_phase_product",
    "potential_estimate_pair",
    "contact_distance",
    "identity_suite",
    "free_boundary_centers",
    "two_phase_centers",
    "write_weiss_csv",
    "write_fits_csv",
    "write_report_json",
]

REFERENCE_NODES = 129  # nodes spanning [-1, 1] on the blow-up grid
_REFERENCE_PAD = 2  # extra rings so rim interpolation never touches hard zeros


@dataclass(frozen=True)
class WeissCurve:
    center: tuple[float, ...]
    radii: tuple[float, ...]
    values: tuple[float, ...]
    slack: float  # smallest C >= 0 with r -> W + C r nondecreasing on the samples

    def corrected(self) -> tuple[float, ...]:
        return tuple(w + self.slack * r for w, r in zip(self.values, self.radii))


@dataclass(frozen=True)
class TwoPlaneFit:
    beta_plus: float
    beta_minus: float
    nu: tuple[float, ...]
    relative_residual: float


@dataclass(frozen=True)
class DiagnosticsReport:
    energy_balance_residual: float
    eigen_match_residual: float
    lipschitz_estimate: float  # max interior |grad u| of the signed field
    boundary_trace_rescaled: float  # mean one-sided trace of the slope-rescaled field
    contact_distance: float
    nondegeneracy_eta: float
    slope_identity_residual: float
    n_contact_points: int
    weiss: tuple[WeissCurve, ...] = ()


# ---------------------------------------------------------------------------
# blow-up


def reference_ball_grid(dimension: int) -> Grid:
    """Fixed blow-up grid: 129 nodes per axis across [-1, 1] plus a small
    padding ring, so samples on the unit sphere interpolate real values."""
    n = REFERENCE_NODES + 2 * _REFERENCE_PAD
    h = 2.0 / (REFERENCE_NODES - 1)
    half = 1.0 + _REFERENCE_PAD * h
    return build_grid(BoxGeometry((2 * half,) * dimension, origin=(-half,) * dimension), n)


def blow_up(u: ScalarField, center, r: float) -> ScalarField:
    """Rescaling x -> u(center + r x) / r resampled on the reference grid."""
    g = u.grid
    center = np.asarray(center, dtype=float)
    if r < 8 * g.h:
        raise ValueError(f"blow-up radius {r} below 8h = {8 * g.h}")
    for a in range(g.dimension):
        lo, hi = g.origin[a], g.origin[a] + g.extents[a]
        if center[a] - r < lo - 1e-12 or center[a] + r > hi + 1e-12:
            raise ValueError("blow-up ball leaves the box")
    ref = reference_ball_grid(g.dimension)
    pts = center + r * ref.node_coords()
    vals = sample_field(u, pts) / r
    return ScalarField.from_values(ref, vals)


def _ball_indicator(grid: Grid, radius: float = 1.0) -> np.ndarray:
    pts = grid.node_coords()
    d2 = np.sum(pts * pts, axis=-1)
    return d2 < radius * radius


def weiss_energy(u: ScalarField, a_plus: float, a_minus: float, lam: float = 1.0) -> float:
    """Boundary adjusted energy on the unit ball of the reference grid:
    weighted bulk Dirichlet energies minus weighted squared boundary traces
    plus lam times the support measure in the ball."""
    if abs(a_plus + a_minus - 1.0) > 1e-6:
        raise ValueError("phase coefficients must sum to one")
    g = u.grid
    ball = _ball_indicator(g)
    hd = g.h**g.dimension
    up = np.maximum(u.values, 0.0)
    um = np.maximum(-u.values, 0.0)
    gp = gradient_field(ScalarField.from_values(g, up))
    gm = gradient_field(ScalarField.from_values(g, um))
    bulk = a_plus * float(np.sum(np.sum(gp * gp, axis=-1)[ball])) * hd
    bulk += a_minus * float(np.sum(np.sum(gm * gm, axis=-1)[ball])) * hd
    sq_plus = ScalarField.from_values(g, up * up)
    sq_minus = ScalarField.from_values(g, um * um)
    origin = (0.0,) * g.dimension
    if g.dimension == 1:
        surf = 2.0  # counting measure on the two endpoints: mean times two
        nsamp = 2
    else:
        surf = 2.0 * math.pi
        nsamp = 256
    boundary = a_plus * sphere_average(sq_plus, origin, 1.0, nsamp) * surf
    boundary += a_minus * sphere_average(sq_minus, origin, 1.0, nsamp) * surf
    support = float(np.count_nonzero(np.abs(u.values[ball]) > 0.0)) * hd
    return bulk - boundary + lam * support


def weiss_scan(state: PhaseState, center, radii, samples: int = 256) -> WeissCurve:
    """Weiss values of the blow-ups of the state's signed field over the radii,
    with the smallest slack constant restoring monotonicity."""
    radii = tuple(sorted(float(r) for r in radii))
    values = []
    for r in radii:
        ub = blow_up(state.u, center, r)
        values.append(weiss_energy(ub, state.a_plus, state.a_minus, state.lam))
    slack = 0.0
    for (r0, w0), (r1, w1) in zip(zip(radii, values), zip(radii[1:], values[1:])):
        if r1 > r0:
            slack = max(slack, (w0 - w1) / (r1 - r0))
    return WeissCurve(tuple(float(c) for c in np.atleast_1d(center)), radii, tuple(values), slack)


# ---------------------------------------------------------------------------
# two-plane fits


def _plane_split(grid: Grid, nu: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = grid.node_coords()
    s = np.tensordot(pts, nu, axes=([-1], [0]))
    return s, np.maximum(s, 0.0), np.maximum(-s, 0.0)


def _fit_for_direction(u: ScalarField, nu: np.ndarray, ball: np.ndarray):
    g = u.grid
    _, sp, sm = _plane_split(g, nu)
    vals = u.values
    denom_p = float(np.sum(sp[ball] ** 2))
    denom_m = float(np.sum(sm[ball] ** 2))
    bp = max(float(np.sum(vals[ball] * sp[ball])) / denom_p, 0.0) if denom_p > 0 else 0.0
    bm = max(-float(np.sum(vals[ball] * sm[ball])) / denom_m, 0.0) if denom_m > 0 else 0.0
    model = bp * sp - bm * sm
    resid = float(np.sqrt(np.sum((vals[ball] - model[ball]) ** 2)))
    return bp, bm, resid


def fit_two_plane(u: ScalarField, n_angles: int = 256) -> TwoPlaneFit:
    """Least-squares two-plane model beta+ (x.nu)+ - beta- (x.nu)- over the
    unit ball; the direction is scanned on an angular grid and refined by
    golden-section search."""
    g = u.grid
    ball = _ball_indicator(g)
    norm = float(np.sqrt(np.sum(u.values[ball] ** 2)))
    if norm == 0.0:
        raise ValueError("cannot fit a two-plane model to the zero field")

    if g.dimension == 1:
        best = None
        for nu in (np.array([1.0]), np.array([-1.0])):
            bp, bm, resid = _fit_for_direction(u, nu, ball)
            if best is None or resid < best[3]:
                best = (bp, bm, nu, resid)
        bp, bm, nu, resid = best
        return TwoPlaneFit(bp, bm, tuple(nu), resid / norm)

    def residual_at(theta: float) -> tuple[float, tuple]:
        nu = np.array([math.cos(theta), math.sin(theta)])
        bp, bm, resid = _fit_for_direction(u, nu, ball)
        return resid, (bp, bm, nu)

    thetas = 2 * math.pi * np.arange(n_angles) / n_angles
    resids = [residual_at(t)[0] for t in thetas]
    k = int(np.argmin(resids))
    lo = thetas[k] - 2 * math.pi / n_angles
    hi = thetas[k] + 2 * math.pi / n_angles
    phi = (math.sqrt(5.0) - 1) / 2
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = residual_at(c)[0], residual_at(d)[0]
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = residual_at(c)[0]
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = residual_at(d)[0]
    theta = 0.5 * (a + b)
    resid, (bp, bm, nu) = residual_at(theta)
    return TwoPlaneFit(bp, bm, (float(nu[0]), float(nu[1])), resid / norm)


def slope_identity_residual(
    fit: TwoPlaneFit, a_plus: float, a_minus: float, lam: float = 1.0
) -> tuple[float, float, float]:
    """Relative defect of a+ b+^2 = a- b-^2, plus the margins b - sqrt(lam/a)
    of the slope lower bounds."""
    qp = a_plus * fit.beta_plus**2
    qm = a_minus * fit.beta_minus**2
    denom = max(qp, qm)
    identity = abs(qp - qm) / denom if denom > 0 else 0.0
    margin_p = fit.beta_plus - math.sqrt(lam / a_plus) if a_plus > 0 else -math.inf
    margin_m = fit.beta_minus - math.sqrt(lam / a_minus) if a_minus > 0 else -math.inf
    return identity, margin_p, margin_m


# ---------------------------------------------------------------------------
# nondegeneracy, three-phase product, potential estimate


def nondegeneracy_eta(u: ScalarField, center, radii) -> float:
    """Minimum over the radii of (sphere average of |u|) / r."""
    absu = ScalarField.from_values(u.grid, np.abs(u.values))
    ratios = [sphere_average(absu, center, float(r)) / float(r) for r in radii]
    return min(ratios)


def three_phase_product(
    fields: tuple[ScalarField, ScalarField, ScalarField],
    center,
    r: float,
    eps_exp: float = 0.1,
) -> float:
    """Product over the three disjoint fields of
    r^-(2+eps) int_{B_r} |grad u_i|^2 |x - x0|^(2-d) dx."""
    u1, u2, u3 = fields
    for a, b in ((u1, u2), (u1, u3), (u2, u3)):
        if abs(l2_inner(a, b)) > 1e-10:
            raise ValueError("three-phase product requires pairwise disjoint supports")
    g = u1.grid
    center = np.asarray(center, dtype=float)
    pts = g.node_coords()
    d2 = np.zeros(g.nodes)
    for a in range(g.dimension):
        d2 += (pts[..., a] - center[a]) ** 2
    ball = d2 < r * r
    if g.dimension == 2:
        kernel = np.ones(g.nodes)
    else:
        kernel = np.sqrt(d2)  # |x - x0|^(2-d) with d = 1
    hd = g.h**g.dimension
    prod = 1.0
    for u in (u1, u2, u3):
        grad = gradient_field(u)
        gsq = np.sum(grad * grad, axis=-1)
        integral = float(np.sum((gsq * kernel)[ball])) * hd
        prod *= integral / r ** (2.0 + eps_exp)
    return prod


def potential_estimate_pair(u: ScalarField, center, r: float) -> tuple[float, float]:
    """Left and right side of the potential estimate: the zero-set density
    times the squared boundary average against the energy of u minus its
    discrete harmonic extension in the ball (dimensional constant omitted)."""
    g = u.grid
    center = np.asarray(center, dtype=float)
    pts = g.node_coords()
    d2 = np.zeros(g.nodes)
    for a in range(g.dimension):
        d2 += (pts[..., a] - center[a]) ** 2
    ball = (d2 < r * r) & g.inside_mask
    if not ball.any():
        raise ValueError("empty ball")
    hd = g.h**g.dimension
    zero_measure = float(np.count_nonzero(u.values[ball] == 0.0)) * hd
    avg = sphere_average(u, center, r)
    lhs = zero_measure * avg * avg / (r * r)

    # discrete harmonic extension: solve the masked Laplace problem with u as
    # boundary data on the ring outside the ball
    A, flat_idx = masked_laplacian(g, ball)
    full_lap_of_u = _laplacian_full(g, u.values)
    interior_lap = full_lap_of_u.ravel()[flat_idx]
    ball_vals = u.values.ravel()[flat_idx]
    masked_lap_of_u = (A @ ball_vals)
    rhs = masked_lap_of_u - interior_lap  # contribution of the exterior ring data
    hvals, info = scipy.sparse.linalg.cg(A, rhs, rtol=1e-10, atol=0.0, maxiter=20000)
    if info != 0:
        raise RuntimeError(f"harmonic extension solve failed (cg info {info})")
    # h agrees with u outside the ball; inside, u - h has the homogeneous data
    diff = np.zeros(int(np.prod(g.nodes)))
    diff[flat_idx] = ball_vals - hvals
    diff_field = ScalarField(g, diff.reshape(g.nodes))
    rhs_energy = dirichlet_energy(diff_field)
    return lhs, rhs_energy


def _laplacian_full(grid: Grid, values: np.ndarray) -> np.ndarray:
    from .eigensolver import apply_laplacian

    return apply_laplacian(grid, values)


# ---------------------------------------------------------------------------
# contact geometry and boundary-point selection


def contact_distance(state: PhaseState) -> float:
    """Minimum distance from two-phase contact nodes (both masks inside a
    2-cell dilation) to the complement of the domain; +inf if none."""
    g = state.grid
    contact = _chebyshev_dilate(state.mask_plus, 2) & _chebyshev_dilate(state.mask_minus, 2)
    if not contact.any():
        return math.inf
    dist = scipy.ndimage.distance_transform_edt(g.inside_mask, sampling=g.h)
    return float(dist[contact].min())


def free_boundary_centers(state: PhaseState, max_centers: int = 8) -> list[tuple[float, ...]]:
    """One-phase free-boundary nodes: the mask changes inside a 3x3 stencil and
    the other phase stays out of the 5x5 stencil; returns coordinates sorted by
    distance to the wall (farthest first)."""
    g = state.grid
    pts = g.node_coords()
    dist = scipy.ndimage.distance_transform_edt(g.inside_mask, sampling=g.h)
    out: list[tuple[float, float]] = []
    for mask, other in ((state.mask_plus, state.mask_minus), (state.mask_minus, state.mask_plus)):
        edge = _chebyshev_dilate(mask, 1) & ~mask & g.inside_mask
        lonely = edge & ~_chebyshev_dilate(other, 2)
        for idx in np.argwhere(lonely):
            idx = tuple(idx)
            out.append((float(dist[idx]), tuple(float(c) for c in pts[idx])))
    out.sort(key=lambda t: -t[0])
    return [c for _, c in out[:max_centers]]


def two_phase_centers(state: PhaseState, max_centers: int = 8) -> list[tuple[float, ...]]:
    """Contact nodes (both masks inside the 5x5 stencil), farthest from the
    wall first, snapped onto the interpolated zero level of u."""
    g = state.grid
    pts = g.node_coords()
    dist = scipy.ndimage.distance_transform_edt(g.inside_mask, sampling=g.h)
    contact = _chebyshev_dilate(state.mask_plus, 2) & _chebyshev_dilate(state.mask_minus, 2)
    contact &= g.inside_mask
    out = [
        (float(dist[tuple(idx)]), tuple(idx))
        for idx in np.argwhere(contact)
    ]
    out.sort(key=lambda t: -t[0])
    centers = []
    for _, idx in out[:max_centers]:
        centers.append(_snap_to_interface(state.u, idx) or tuple(float(c) for c in pts[idx]))
    return centers


def _snap_to_interface(u: ScalarField, idx: tuple) -> tuple[float, ...] | None:
    """Sub-cell zero crossing of u nearest to the node: linear interpolation
    along the axis with the strongest sign change in a 2-cell neighborhood."""
    g = u.grid
    vals = u.values
    best = None
    for axis in range(g.dimension):
        for offset in range(-2, 2):
            a = list(idx)
            a[axis] += offset
            b = list(a)
            b[axis] += 1
            if not (0 <= a[axis] < g.nodes[axis] - 1):
                continue
            va, vb = vals[tuple(a)], vals[tuple(b)]
            if va * vb < 0:
                frac = va / (va - vb)
                coord = [g.origin[d] + g.h * a[d] for d in range(g.dimension)]
                coord[axis] += frac * g.h
                score = (abs(offset + frac), -abs(va - vb))
                if best is None or score < best[0]:
                    best = (score, tuple(coord))
    return best[1] if best else None


# ---------------------------------------------------------------------------
# aggregate suite


def _max_wall_radius(grid: Grid, center) -> float:
    return min(
        min(center[a] - grid.origin[a], grid.origin[a] + grid.extents[a] - center[a])
        for a in range(grid.dimension)
    )


def identity_suite(state: PhaseState, weiss_centers: int = 2) -> DiagnosticsReport:
    """Residuals of the equal-energy and eigenvalue-match identities, the
    gradient bound of the slope-rescaled field, contact geometry, the
    nondegeneracy ratio, and (when contact points exist) the blow-up slope
    identity; failing checks are reported, never raised."""
    g = state.grid
    up, um = state.phase_fields()
    ep, em = dirichlet_energy(up), dirichlet_energy(um)
    energy_balance = abs(ep - em) / max(ep, em)

    lam2 = state.lambda2
    eigen_match = max(abs(state.lambda1_plus - lam2), abs(state.lambda1_minus - lam2)) / lam2

    grad = gradient_field(state.u)
    lipschitz = float(np.sqrt(np.max(np.sum(grad * grad, axis=-1))))
    boundary_trace = _boundary_trace_rescaled(state)

    cdist = contact_distance(state)

    usable = []
    for c in free_boundary_centers(state, max_centers=8):
        rmax = _max_wall_radius(g, c)
        if rmax > 4 * g.h:
            usable.append((c, rmax))
    contact_pts = two_phase_centers(state, max_centers=8)
    eta_centers = usable or [
        (c, _max_wall_radius(g, c)) for c in contact_pts if _max_wall_radius(g, c) > 4 * g.h
    ]
    eta = 0.0
    if eta_centers:
        c, rmax = eta_centers[0]
        radii = np.linspace(4 * g.h, min(rmax * 0.9, 16 * g.h), 5)
        absu = ScalarField.from_values(g, np.abs(state.u.values))
        eta = min(sphere_average(absu, c, float(r)) / float(r) for r in radii)

    slope_resid = 0.0
    weiss_curves: list[WeissCurve] = []
    fit_pts = [c for c in contact_pts if _max_wall_radius(g, c) > 8 * g.h]
    if fit_pts:
        c = fit_pts[0]
        # window small enough to dodge eigenfunction curvature, large enough
        # to average out the cell-level kink asymmetry of the masks
        r = max(8 * g.h, 0.5 * _max_wall_radius(g, c))
        fit = fit_two_plane(blow_up(state.u, c, r))
        slope_resid, _, _ = slope_identity_residual(fit, state.a_plus, state.a_minus, state.lam)
        for cw in fit_pts[:weiss_centers]:
            rmax = 0.9 * _max_wall_radius(g, cw)
            radii = np.linspace(max(8 * g.h, 0.3 * rmax), rmax, 6)
            weiss_curves.append(weiss_scan(state, cw, radii))
    else:
        for cw, rmax in usable[:weiss_centers]:
            radii = np.linspace(max(8 * g.h, 0.4 * rmax), 0.9 * rmax, 6)
            if radii[0] < radii[-1] and radii[0] >= 8 * g.h:
                weiss_curves.append(weiss_scan(state, cw, radii))

    return DiagnosticsReport(
        energy_balance_residual=energy_balance,
        eigen_match_residual=eigen_match,
        lipschitz_estimate=lipschitz,
        boundary_trace_rescaled=boundary_trace,
        contact_distance=cdist,
        nondegeneracy_eta=eta,
        slope_identity_residual=slope_resid,
        n_contact_points=len(contact_pts),
        weiss=tuple(weiss_curves),
    )


def _boundary_trace_rescaled(state: PhaseState) -> float:
    """Mean one-sided gradient trace of sqrt(a) u over one-phase boundary
    cells; approaches sqrt(lam) on converged states."""
    g = state.grid
    away_from_wall = ~_chebyshev_dilate(~g.inside_mask, 2)  # the wall is not a free boundary
    traces = []
    for mask, other, a in (
        (state.mask_plus, state.mask_minus, state.a_plus),
        (state.mask_minus, state.mask_plus, state.a_minus),
    ):
        interior = mask.copy()
        for axis in range(g.dimension):
            interior &= np.roll(mask, 1, axis=axis)
            interior &= np.roll(mask, -1, axis=axis)
        boundary = mask & ~interior & ~_chebyshev_dilate(other, 2) & away_from_wall
        vals = np.abs(state.u.values[boundary]) * math.sqrt(a) / g.h
        traces.extend(vals.tolist())
    return float(np.mean(traces)) if traces else 0.0


# ---------------------------------------------------------------------------
# persistence


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_weiss_csv(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["center", "r", "W", "C"])
        for curve in curves:
            cname = ";".join(_fmt(c) for c in curve.center)
            for r, val in zip(curve.radii, curve.values):
                w.writerow([cname, _fmt(r), _fmt(val), _fmt(curve.slack)])


def write_fits_csv(path, rows) -> None:
    """Rows of (center, TwoPlaneFit)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["center", "beta_plus", "beta_minus", "nu", "residual"])
        for center, fit in rows:
            cname = ";".join(_fmt(c) for c in center)
            nname = ";".join(_fmt(c) for c in fit.nu)
            w.writerow([cname, _fmt(fit.beta_plus), _fmt(fit.beta_minus), nname, _fmt(fit.relative_residual)])


def write_report_json(path, report: DiagnosticsReport) -> None:
    payload = asdict(report)
    payload["weiss"] = [
        {
            "center": list(c.center),
            "radii": list(c.radii),
            "values": list(c.values),
            "slack": c.slack,
        }
        for c in report.weiss
    ]
    if math.isinf(payload["contact_distance"]):
        payload["contact_distance"] = None  # JSON has no Infinity
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
