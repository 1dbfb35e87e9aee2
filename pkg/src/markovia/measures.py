"""Entanglement measures and trace-norm distances for labeled states."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import InvariantError, LayoutError
from .states import MultipartiteState, as_complex_matrix


def partial_transpose(state: MultipartiteState, side: Iterable[str]) -> np.ndarray:
    """Matrix of the state transposed on the ``side`` subsystems."""
    side = set(side)
    unknown = side - set(state.labels)
    if unknown:
        raise LayoutError(f"unknown subsystem labels {sorted(unknown)}")
    dims = list(state.dims)
    n = len(dims)
    tensor = state.matrix.reshape(dims + dims)
    axes = list(range(2 * n))
    for i, label in enumerate(state.labels):
        if label in side:
            axes[i], axes[n + i] = axes[n + i], axes[i]
    return np.ascontiguousarray(tensor.transpose(axes).reshape(state.dim, state.dim))


def negativity(state: MultipartiteState, side: Iterable[str]) -> float:
    """(||rho^{T_side}||_1 - 1) / 2 across the side|rest bipartition."""
    side = set(side)
    if not side or side == set(state.labels):
        raise LayoutError("side must be a proper non-empty subset of the labels")
    pt = partial_transpose(state, side)
    trace_norm = float(np.sum(np.abs(np.linalg.eigvalsh(pt))))
    return max(0.0, (trace_norm - 1.0) / 2.0)


def concurrence(state: MultipartiteState) -> float:
    """Wootters concurrence of a two-qubit state."""
    if state.dims != (2, 2):
        raise InvariantError(
            f"concurrence requires a two-qubit layout, got dims {state.dims}",
            ["shape"],
        )
    sy = np.array([[0.0, -1.0j], [1.0j, 0.0]])
    yy = np.kron(sy, sy)
    rho = state.matrix
    rho_tilde = yy @ rho.conj() @ yy
    # same spectrum as rho @ rho_tilde, but via a Hermitian pencil
    vals, vecs = np.linalg.eigh(rho)
    sqrt_rho = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    pencil = sqrt_rho @ rho_tilde @ sqrt_rho
    pvals = np.linalg.eigvalsh(pencil)[::-1]
    # square roots amplify rounding noise at zero, so floor it away first
    pvals[pvals < max(1e-24, float(pvals[0]) * 1e-13)] = 0.0
    roots = np.sqrt(pvals)
    return max(0.0, float(roots[0] - roots[1] - roots[2] - roots[3]))


def one_norm(matrix) -> float:
    """Trace norm of a Hermitian matrix (sum of absolute eigenvalues)."""
    arr = as_complex_matrix(matrix)
    dev = np.max(np.abs(arr - arr.conj().T)) if arr.size else 0.0
    if dev > 1e-8:
        raise InvariantError(
            f"one_norm requires a Hermitian matrix (deviation {dev:.3e})",
            ["hermiticity"],
        )
    return float(np.sum(np.abs(np.linalg.eigvalsh((arr + arr.conj().T) / 2.0))))


def one_norm_distance(a, b) -> float:
    """Trace-norm distance between two matrices with Hermitian difference."""
    am = a.matrix if isinstance(a, MultipartiteState) else as_complex_matrix(a)
    bm = b.matrix if isinstance(b, MultipartiteState) else as_complex_matrix(b)
    if am.shape != bm.shape:
        raise LayoutError(f"dimension mismatch {am.shape} vs {bm.shape}")
    return one_norm(am - bm)
