"""Smallest Dirichlet eigenpairs of the masked finite-difference Laplacian.

The solver is matrix-free in spirit: a sparse operator restricted to the mask,
inverse (shift-invert at zero) iteration with deflation against converged
vectors, and conjugate-gradient inner solves.  Masks change on every optimizer
sweep, so there is no factorization; warm starts make repeated solves on
nearby masks cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.ndimage
import scipy.sparse
import scipy.sparse.linalg

from .grid import Grid, ScalarField, dirichlet_energy, l2_inner

__all__ = [
    "EigenResult",
    "EmptyDomainError",
    "EigensolverError",
    "smallest_eigenpairs",
    "rayleigh_quotient",
    "masked_laplacian",
    "apply_laplacian",
]


class EmptyDomainError(ValueError):
    """Raised for an empty domain, where the eigenvalue convention is +inf."""


class EigensolverError(RuntimeError):
    """Non-convergence after the iteration budget; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class EigenResult:
    """Ascending eigenvalues with L2-normalized eigenfunctions on the mask."""

    eigenvalues: tuple[float, ...]
    eigenfunctions: tuple[ScalarField, ...]


def apply_laplacian(grid: Grid, values: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Five-point (three-point in 1D) -Laplacian of the zero-extended array."""
    if mask is not None:
        values = np.where(mask, values, 0.0)
    h2 = grid.h * grid.h
    out = (2 * grid.dimension / h2) * values
    for axis in range(grid.dimension):
        padded = np.swapaxes(values, 0, axis)
        acc = np.zeros_like(padded)
        acc[:-1] += padded[1:]
        acc[1:] += padded[:-1]
        out -= np.swapaxes(acc, 0, axis) / h2
    if mask is not None:
        out[~mask] = 0.0
    return out


def masked_laplacian(grid: Grid, mask: np.ndarray) -> tuple[scipy.sparse.csr_matrix, np.ndarray]:
    """CSR matrix of the Dirichlet Laplacian on the masked nodes.

    Returns the matrix and the flat indices of the masked nodes in grid order.
    """
    mask = np.asarray(mask, dtype=bool)
    flat_idx = np.flatnonzero(mask.ravel())
    n = flat_idx.size
    compact = -np.ones(int(np.prod(grid.nodes)), dtype=np.int64)
    compact[flat_idx] = np.arange(n)
    h2 = grid.h * grid.h

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 2 * grid.dimension / h2)]
    shape = grid.nodes
    for axis in range(grid.dimension):
        left = mask.copy()
        sl = [slice(None)] * grid.dimension
        sl[axis] = slice(0, shape[axis] - 1)
        a = mask[tuple(sl)]
        sl[axis] = slice(1, shape[axis])
        b = mask[tuple(sl)]
        pair = a & b
        if not pair.any():
            continue
        ia = np.zeros(shape, dtype=bool)
        sl[axis] = slice(0, shape[axis] - 1)
        ia[tuple(sl)] = pair
        ib = np.zeros(shape, dtype=bool)
        sl[axis] = slice(1, shape[axis])
        ib[tuple(sl)] = pair
        ca = compact[np.flatnonzero(ia.ravel())]
        cb = compact[np.flatnonzero(ib.ravel())]
        rows += [ca, cb]
        cols += [cb, ca]
        off = np.full(ca.size, -1.0 / h2)
        vals += [off, off]
        del left
    A = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return A, flat_idx


def _orthogonalize(x: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for u in basis:
        x = x - np.dot(u, x) * u
    return x


def _rayleigh_polish(A, x, lam, vecs, tol, max_steps: int = 30):
    n = A.shape[0]
    res = float(np.linalg.norm(A @ x - lam * x)) / max(abs(lam), 1e-30)
    for _ in range(max_steps):
        if res <= tol:
            break
        sigma = lam
        shifted = A - sigma * scipy.sparse.identity(n, format="csr")
        y, _ = scipy.sparse.linalg.minres(shifted, x, x0=x, rtol=1e-12, maxiter=600)
        y = _orthogonalize(y, vecs)
        ny = np.linalg.norm(y)
        if ny < 1e-300:
            break
        x = y / ny
        Ax = A @ x
        lam = float(x @ Ax)
        res = float(np.linalg.norm(Ax - lam * x)) / max(abs(lam), 1e-30)
    return lam, x, res


def smallest_eigenpairs(
    grid: Grid,
    mask: np.ndarray,
    k: int,
    tol: float = 1e-8,
    max_iters: int = 400,
    warm_start: list[np.ndarray] | None = None,
    localize: bool = True,
) -> EigenResult:
    """k smallest Dirichlet eigenpairs on the masked region.

    Deflated inverse iteration with CG inner solves.  Degenerate eigenvalues
    return an arbitrary orthonormal basis of the eigenspace; when the mask is
    disconnected, degenerate clusters are rotated onto single components.

    `warm_start` may hold full-shape arrays used as initial guesses.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.nodes:
        raise ValueError("mask shape does not match grid")
    if np.any(mask & ~grid.inside_mask):
        raise ValueError("mask leaves the inside of the domain")
    if k < 1:
        raise ValueError("k must be positive")
    n = int(mask.sum())
    if n == 0:
        raise EmptyDomainError("empty domain")
    if n < k:
        raise EmptyDomainError(f"mask with {n} nodes cannot support {k} eigenpairs")

    A, flat_idx = masked_laplacian(grid, mask)
    wh = grid.h ** (grid.dimension / 2.0)  # scales plain 2-norm to the L2(h) norm
    rng = np.random.default_rng(1234)

    lams: list[float] = []
    vecs: list[np.ndarray] = []
    for j in range(k):
        if warm_start is not None and j < len(warm_start) and warm_start[j] is not None:
            x = warm_start[j].ravel()[flat_idx].astype(float)
        else:
            x = rng.standard_normal(n)
        x = _orthogonalize(x, vecs)
        nx = np.linalg.norm(x)
        if nx < 1e-12:
            x = _orthogonalize(rng.standard_normal(n), vecs)
            nx = np.linalg.norm(x)
        x /= nx

        lam = float(x @ (A @ x))
        res = math.inf
        cg_rtol = 1e-3
        stalled = False
        for it in range(max_iters):
            y, _ = scipy.sparse.linalg.cg(A, x, x0=x / max(lam, 1e-30), rtol=cg_rtol, atol=0.0)
            y = _orthogonalize(y, vecs)
            ny = np.linalg.norm(y)
            if ny < 1e-14:
                y = _orthogonalize(rng.standard_normal(n), vecs)
                ny = np.linalg.norm(y)
            x = y / ny
            Ax = A @ x
            new_lam = float(x @ Ax)
            res = float(np.linalg.norm(Ax - lam * x)) / max(abs(new_lam), 1e-30)
            stalled = abs(new_lam - lam) <= 1e-3 * abs(new_lam) and res < 1e-3
            lam = new_lam
            if res <= tol or stalled:
                break
            cg_rtol = max(min(0.1 * res, 1e-3), tol * 0.05)
        if res > tol:
            # clustered eigenvalues make plain inverse iteration crawl; polish
            # with Rayleigh-shifted solves (indefinite, hence MINRES)
            lam, x, res = _rayleigh_polish(A, x, lam, vecs, tol)
        if res > tol:
            raise EigensolverError(f"eigenpair {j} did not converge", res)
        lams.append(lam)
        vecs.append(x)

    order = np.argsort(lams)
    lams = [lams[i] for i in order]
    vecs = [vecs[i] for i in order]

    if localize and k > 1:
        lams, vecs = _localize_degenerate(A, lams, vecs, mask, flat_idx, tol)

    # deterministic sign: the largest-magnitude entry is positive, which makes
    # first eigenfunctions nonnegative
    vecs = [v if v[int(np.argmax(np.abs(v)))] >= 0 else -v for v in vecs]

    fields = []
    for v in vecs:
        full = np.zeros(int(np.prod(grid.nodes)))
        full[flat_idx] = v / wh  # unit L2(h) norm
        fields.append(ScalarField(grid, full.reshape(grid.nodes)))
    return EigenResult(tuple(float(l) for l in lams), tuple(fields))


def _localize_degenerate(A, lams, vecs, mask, flat_idx, tol):
    """Rotate degenerate clusters so eigenvectors live on single mask components."""
    labels, n_comp = scipy.ndimage.label(mask)
    if n_comp < 2:
        return lams, vecs
    comp_of_node = labels.ravel()[flat_idx]

    out_l, out_v = [], []
    i = 0
    while i < len(lams):
        j = i + 1
        while j < len(lams) and abs(lams[j] - lams[i]) <= 1e-6 * max(1.0, abs(lams[i])):
            j += 1
        cluster_v = vecs[i:j]
        cluster_l = lams[i:j]
        if j - i >= 2:
            candidates = []
            for v in cluster_v:
                for c in range(1, n_comp + 1):
                    piece = np.where(comp_of_node == c, v, 0.0)
                    nv = np.linalg.norm(piece)
                    if nv > 1e-6:
                        candidates.append(piece / nv)
            kept = []
            for cand in candidates:
                cand = _orthogonalize(cand, kept)
                nv = np.linalg.norm(cand)
                if nv < 1e-8:
                    continue
                cand /= nv
                lam = float(cand @ (A @ cand))
                res = float(np.linalg.norm(A @ cand - lam * cand)) / max(abs(lam), 1e-30)
                if res <= 10 * tol:
                    kept.append(cand)
                if len(kept) == len(cluster_v):
                    break
            if len(kept) == len(cluster_v):
                cluster_v = kept
                cluster_l = [float(v @ (A @ v)) for v in kept]
        out_l += cluster_l
        out_v += cluster_v
        i = j
    order = np.argsort(out_l)
    return [out_l[i] for i in order], [out_v[i] for i in order]


def rayleigh_quotient(v: ScalarField) -> float:
    """Dirichlet energy over squared L2 norm; +inf for the zero field."""
    if np.any(v.values < 0):
        raise ValueError("rayleigh_quotient expects a nonnegative field; split signs first")
    m = l2_inner(v, v)
    if m == 0.0:
        return math.inf
    return dirichlet_energy(v) / m
