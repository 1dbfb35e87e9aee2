"""Numerical structure analysis of finite-dimensional operator algebras.

A *-closed operator system containing the identity (here always the
fixed-point set of a unital CP map with a faithful invariant state) is a
direct sum of full matrix factors tensored with identities:

    N  =  (+)_k  B(L_k) (x) I_{R_k}

The routines here recover that structure numerically: a Hermitian basis of
the algebra, its center, the central block supports, and within each block
an explicit product basis splitting the left (algebra) factor from the
right (commutant) factor.  Randomized choices use a caller-supplied
generator so results are reproducible.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np


class AlgebraStructureError(RuntimeError):
    """The numerical structure extraction failed on this input."""


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization, so vec(AXB) = (B^T kron A) vec(X)."""
    return matrix.reshape(-1, order="F")


def unvec(vector: np.ndarray, dim: int) -> np.ndarray:
    return vector.reshape(dim, dim, order="F")


def orthonormal_hermitian_basis(
    matrices: Sequence[np.ndarray], dim: int, rtol: float = 1e-9
) -> list[np.ndarray]:
    """Hilbert-Schmidt-orthonormal Hermitian basis of the *-closed span."""
    rows = []
    for m in matrices:
        for h in ((m + m.conj().T) / 2.0, (m - m.conj().T) / 2.0j):
            if np.linalg.norm(h) < 1e-14:
                continue
            flat = h.reshape(-1)
            rows.append(np.concatenate([flat.real, flat.imag]))
    if not rows:
        return []
    stacked = np.array(rows)
    _, svals, vh = np.linalg.svd(stacked, full_matrices=False)
    rank = int(np.sum(svals > rtol * svals[0]))
    basis = []
    for row in vh[:rank]:
        h = row[: dim * dim].reshape(dim, dim) + 1j * row[dim * dim :].reshape(dim, dim)
        h = (h + h.conj().T) / 2.0
        basis.append(h / np.linalg.norm(h))
    return basis


def fixed_point_basis(
    superop: np.ndarray, dim: int, atol: float = 1e-7
) -> list[np.ndarray]:
    """Hermitian basis of {X : S(X) = X} for a superoperator S on d x d."""
    delta = superop - np.eye(dim * dim)
    _, svals, vh = np.linalg.svd(delta)
    mats = [unvec(vh[i].conj(), dim) for i in range(len(svals)) if svals[i] <= atol]
    return orthonormal_hermitian_basis(mats, dim)


def commutant_basis(
    generators: Sequence[np.ndarray], dim: int, atol: float = 1e-7
) -> list[np.ndarray]:
    """Hermitian basis of {X : [X, G] = 0 for every generator G}."""
    blocks = [np.kron(g.T, np.eye(dim)) - np.kron(np.eye(dim), g) for g in generators]
    stacked = np.vstack(blocks)
    _, svals, vh = np.linalg.svd(stacked)
    ncols = dim * dim
    mats = []
    for i in range(ncols):
        sv = svals[i] if i < len(svals) else 0.0
        if sv <= atol:
            mats.append(unvec(vh[i].conj(), dim))
    return orthonormal_hermitian_basis(mats, dim)


def center_basis(basis: Sequence[np.ndarray], dim: int, atol: float = 1e-7) -> list[np.ndarray]:
    """Hermitian basis of the elements of span(basis) commuting with all of it."""
    cols = []
    for gm in basis:
        col = np.concatenate([(gm @ ga - ga @ gm).reshape(-1) for ga in basis])
        cols.append(col)
    a_complex = np.array(cols).T
    a_real = np.vstack([a_complex.real, a_complex.imag])
    _, svals, vh = np.linalg.svd(a_real)
    m = len(basis)
    combos = []
    for i in range(m):
        sv = svals[i] if i < len(svals) else 0.0
        if sv <= atol:
            combos.append(vh[i])
    center = []
    for c in combos:
        z = sum(coef * g for coef, g in zip(c, basis))
        center.append(z / np.linalg.norm(z))
    return center


def _random_hermitian_combo(basis: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    coeffs = rng.standard_normal(len(basis))
    return sum(c * g for c, g in zip(coeffs, basis))


def _group_eigenvalues(vals: np.ndarray, gap_tol: float) -> list[tuple[int, int]]:
    groups = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[i - 1] > gap_tol:
            groups.append((start, i))
            start = i
    return groups


def _split_factor_block(
    block_basis: Sequence[np.ndarray],
    d_block: int,
    rng: np.random.Generator,
    attempts: int = 8,
) -> tuple[int, int, np.ndarray]:
    """Return (d_left, d_right, W) with W a unitary product basis of a factor.

    ``block_basis`` spans a full matrix factor B(L) (x) I_R inside the
    block; the columns of W order the product basis left-major, so every
    element of the factor becomes X (x) I in the W coordinates.
    """
    m = len(block_basis)
    d_left = math.isqrt(m)
    if d_left * d_left != m or d_block % d_left != 0:
        raise AlgebraStructureError(
            f"block algebra dim {m} is not a perfect square dividing {d_block}"
        )
    d_right = d_block // d_left
    if d_left == 1 or d_right == 1:
        return d_left, d_right, np.eye(d_block, dtype=complex)

    comm = commutant_basis(block_basis, d_block)
    if len(comm) != d_right * d_right:
        raise AlgebraStructureError(
            f"block commutant dim {len(comm)} != expected {d_right * d_right}"
        )

    for _ in range(attempts):
        k1 = _random_hermitian_combo(comm, rng)
        vals, vecs = np.linalg.eigh(k1)
        spread = max(1.0, float(vals[-1] - vals[0]))
        groups = _group_eigenvalues(vals, 1e-6 * spread)
        if len(groups) != d_right or any(b - a != d_left for a, b in groups):
            continue
        k2 = _random_hermitian_combo(comm, rng)
        w1 = vecs[:, groups[0][0] : groups[0][1]]
        cols = np.zeros((d_block, d_block), dtype=complex)
        ok = True
        for r, (a, b) in enumerate(groups):
            wr = vecs[:, a:b]
            if r == 0:
                transported = w1
            else:
                overlap = wr.conj().T @ k2 @ w1
                u, svals, vh = np.linalg.svd(overlap)
                if svals[-1] < 1e-6 * max(svals[0], 1e-30):
                    ok = False
                    break
                transported = wr @ (u @ vh)
            for left in range(d_left):
                cols[:, left * d_right + r] = transported[:, left]
        if not ok:
            continue
        resid = _factor_residual(block_basis, cols, d_left, d_right)
        if resid < 1e-6:
            return d_left, d_right, cols
    raise AlgebraStructureError("could not build a product basis for the block")


def _factor_residual(
    basis: Sequence[np.ndarray], cols: np.ndarray, d_left: int, d_right: int
) -> float:
    """Deviation of the basis from X (x) I form in the given coordinates."""
    worst = 0.0
    for g in basis:
        gt = (cols.conj().T @ g @ cols).reshape(d_left, d_right, d_left, d_right)
        x = np.einsum("lrmr->lm", gt) / d_right
        model = np.einsum("lm,rs->lrms", x, np.eye(d_right))
        worst = max(worst, float(np.max(np.abs(gt - model))))
    return worst


def algebra_block_structure(
    basis: Sequence[np.ndarray],
    dim: int,
    rng: np.random.Generator,
    attempts: int = 8,
) -> list[tuple[np.ndarray, int, int]]:
    """Decompose a unital *-closed algebra into tensor-factor blocks.

    Returns (columns, d_left, d_right) per block: ``columns`` is an
    orthonormal d x (d_left*d_right) family spanning the block support,
    ordered left-major so that restricted algebra elements are X (x) I.
    """
    if not basis:
        raise AlgebraStructureError("empty algebra basis")
    centre = center_basis(basis, dim)
    if not centre:
        raise AlgebraStructureError("algebra has empty center (identity missing?)")

    last_error = None
    for _ in range(attempts):
        z = _random_hermitian_combo(centre, rng)
        vals, vecs = np.linalg.eigh(z)
        spread = max(1.0, float(vals[-1] - vals[0]))
        groups = _group_eigenvalues(vals, 1e-6 * spread)
        try:
            blocks = []
            total_alg_dim = 0
            for a, b in groups:
                support = vecs[:, a:b]
                restricted = [support.conj().T @ g @ support for g in basis]
                block_basis = orthonormal_hermitian_basis(restricted, b - a)
                d_left, d_right, w = _split_factor_block(block_basis, b - a, rng)
                total_alg_dim += d_left * d_left
                blocks.append((support @ w, d_left, d_right))
            if total_alg_dim != len(basis):
                raise AlgebraStructureError(
                    f"factor dims {total_alg_dim} != algebra dim {len(basis)}"
                )
            return blocks
        except AlgebraStructureError as err:
            last_error = err
            continue
    raise last_error if last_error is not None else AlgebraStructureError("no attempts")
