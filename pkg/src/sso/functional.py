"""Objective functionals: the max coupling, its p-norm relaxation, the
p-coefficients, support measures, and the shape objective lambda_2 + volume."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, ScalarField, dirichlet_energy, l2_inner
from .eigensolver import rayleigh_quotient, smallest_eigenpairs

__all__ = [
    "ObjectiveBreakdown",
    "DegeneratePhaseError",
    "j_infty",
    "j_p",
    "coefficients_a",
    "support_measure",
    "smoothed_volume",
    "objective_relaxed",
    "f_lambda",
]


class DegeneratePhaseError(ValueError):
    """A phase vanished, so its Rayleigh quotient is +inf."""


@dataclass(frozen=True)
class ObjectiveBreakdown:
    energy_plus: float
    energy_minus: float
    coupling: float
    volume: float
    fidelity: float
    total: float


def j_infty(x: float, y: float) -> float:
    if x < 0 or y < 0:
        raise ValueError("j_infty arguments must be nonnegative")
    return max(x, y)


def j_p(x: float, y: float, p: float) -> float:
    """(x^p + y^p)^(1/p), log-domain stabilized for large p."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    if x < 0 or y < 0:
        raise ValueError("j_p arguments must be nonnegative")
    big, small = (x, y) if x >= y else (y, x)
    if big == 0.0:
        return 0.0
    t = math.exp(p * math.log(small / big)) if small > 0 else 0.0
    return big * math.exp(math.log1p(t) / p)


def coefficients_a(rp: float, rm: float, p: float) -> tuple[float, float]:
    """Weights R^(p-1) / (Rp^p + Rm^p)^(1-1/p): the gradient of j_p.

    They satisfy a+^(p/(p-1)) + a-^(p/(p-1)) = 1 and tend to (1/2, 1/2) when
    the two quotients agree and p grows.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    if rp <= 0 or rm <= 0:
        raise ValueError("Rayleigh quotients must be positive")
    s = j_p(rp, rm, p)
    a_plus = math.exp((p - 1) * (math.log(rp) - math.log(s)))
    a_minus = math.exp((p - 1) * (math.log(rm) - math.log(s)))
    return a_plus, a_minus


def support_measure(v: ScalarField, threshold: float = 0.0) -> float:
    """h^d times the number of nodes with |v| above the threshold."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    g = v.grid
    return float(np.count_nonzero(np.abs(v.values) > threshold)) * g.h**g.dimension


def smoothed_volume(v: ScalarField, eps: float) -> float:
    """Differentiable support surrogate: h^d * sum v^2/(v^2 + eps^2)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = v.grid
    v2 = v.values * v.values
    return float(np.sum(v2 / (v2 + eps * eps))) * g.h**g.dimension


def objective_relaxed(
    v: ScalarField,
    u_ref: ScalarField | None,
    p: float,
    lam: float,
    eps: float,
    fidelity_weight: float = 0.0,
) -> ObjectiveBreakdown:
    """Relaxed objective J_p(R(v+), R(v-)) + lam * smoothed volume + fidelity."""
    vp = v.positive_part()
    vm = v.negative_part()
    rp = rayleigh_quotient(vp)
    rm = rayleigh_quotient(vm)
    if math.isinf(rp) or math.isinf(rm):
        raise DegeneratePhaseError("degenerate phase")
    coupling = j_p(rp, rm, p)
    volume = smoothed_volume(v, eps)
    if u_ref is not None:
        diff = ScalarField(v.grid, v.values - u_ref.values)
        fidelity = l2_inner(diff, diff)
    else:
        fidelity = 0.0
    total = coupling + lam * volume + fidelity_weight * fidelity
    return ObjectiveBreakdown(
        energy_plus=dirichlet_energy(vp),
        energy_minus=dirichlet_energy(vm),
        coupling=coupling,
        volume=volume,
        fidelity=fidelity,
        total=total,
    )


def f_lambda(grid: Grid, mask: np.ndarray, lam: float, tol: float = 1e-8) -> float:
    """Shape objective lambda_2(mask) + lam * |mask|."""
    result = smallest_eigenpairs(grid, mask, k=2, tol=tol)
    vol = float(np.count_nonzero(mask)) * grid.h**grid.dimension
    return result.eigenvalues[1] + lam * vol
