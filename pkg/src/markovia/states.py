"""Labeled multipartite density matrices and entropic quantities on them.

Conventions fixed package-wide:

* Tensor factors are ordered most-significant-left: for subsystem dims
  ``(d_1, ..., d_n)`` the basis index of ``(k_1, ..., k_n)`` is
  ``sum_i k_i * prod_{j>i} d_j``, which is exactly the ordering produced by
  chained ``numpy.kron``.
* Entropies and mutual informations are reported in bits (log base 2).
* Default tolerances: hermiticity 1e-10, trace 1e-10, positive
  semidefiniteness -1e-10, equality residuals 1e-9.  All are overridable
  per call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InvariantError, LayoutError

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
RESIDUAL_TOL = 1e-9


def as_complex_matrix(matrix, square: bool = True) -> np.ndarray:
    """Coerce input to a complex ndarray, rejecting non-finite entries."""
    arr = np.array(matrix, dtype=complex)
    if arr.ndim != 2:
        raise InvariantError("matrix must be two-dimensional", ["shape"])
    if square and arr.shape[0] != arr.shape[1]:
        raise InvariantError(f"matrix must be square, got {arr.shape}", ["shape"])
    if not np.all(np.isfinite(arr)):
        raise InvariantError("matrix entries must be finite", ["finite"])
    return arr


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered list of (label, dim) pairs describing a tensor factorization."""

    parts: tuple[tuple[str, int], ...]

    def __post_init__(self):
        parts = tuple((str(label), int(dim)) for label, dim in self.parts)
        object.__setattr__(self, "parts", parts)
        seen = set()
        for label, dim in parts:
            if not label:
                raise LayoutError("subsystem labels must be non-empty")
            if label in seen:
                raise LayoutError(f"duplicate subsystem label {label!r}")
            if dim < 1:
                raise LayoutError(f"subsystem {label!r} has dim {dim} < 1")
            seen.add(label)

    @classmethod
    def coerce(cls, layout) -> "SubsystemLayout":
        if isinstance(layout, SubsystemLayout):
            return layout
        return cls(tuple(layout))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.parts)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.parts)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.parts else 1

    def position(self, label: str) -> int:
        for i, (name, _) in enumerate(self.parts):
            if name == label:
                return i
        raise LayoutError(f"unknown subsystem label {label!r}")

    def dim_of(self, label: str) -> int:
        return self.parts[self.position(label)][1]

    def restrict(self, labels: Iterable[str]) -> "SubsystemLayout":
        """Sub-layout of the given labels, in their original relative order."""
        wanted = set(labels)
        unknown = wanted - set(self.labels)
        if unknown:
            raise LayoutError(f"unknown subsystem labels {sorted(unknown)}")
        return SubsystemLayout(tuple(p for p in self.parts if p[0] in wanted))

    def __len__(self) -> int:
        return len(self.parts)


def state_invariant_failures(
    matrix: np.ndarray,
    herm_tol: float = HERMITICITY_TOL,
    trace_tol: float = TRACE_TOL,
    psd_tol: float = PSD_TOL,
) -> list[str]:
    """Names of the density-matrix invariants violated by ``matrix``."""
    failures = []
    herm = np.max(np.abs(matrix - matrix.conj().T)) if matrix.size else 0.0
    if herm > herm_tol:
        failures.append(f"hermiticity (deviation {herm:.3e} > {herm_tol:g})")
    tr = abs(np.trace(matrix) - 1.0)
    if tr > trace_tol:
        failures.append(f"unit trace (deviation {tr:.3e} > {trace_tol:g})")
    if not failures:
        lo = float(np.linalg.eigvalsh((matrix + matrix.conj().T) / 2.0)[0])
        if lo < -psd_tol:
            failures.append(f"positive semidefiniteness (min eigenvalue {lo:.3e})")
    return failures


class MultipartiteState:
    """Density matrix together with its subsystem layout.

    Immutable after construction; the underlying array is marked
    read-only so instances are safe to share between threads.
    """

    __slots__ = ("matrix", "layout")

    def __init__(
        self,
        matrix,
        layout,
        *,
        herm_tol: float = HERMITICITY_TOL,
        trace_tol: float = TRACE_TOL,
        psd_tol: float = PSD_TOL,
    ):
        arr = as_complex_matrix(matrix)
        lay = SubsystemLayout.coerce(layout)
        if lay.dim != arr.shape[0]:
            raise LayoutError(
                f"layout dim {lay.dim} does not match matrix dim {arr.shape[0]}"
            )
        failures = state_invariant_failures(arr, herm_tol, trace_tol, psd_tol)
        if failures:
            raise InvariantError(
                "invalid state: " + "; ".join(failures), failures=failures
            )
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)
        object.__setattr__(self, "layout", lay)

    def __setattr__(self, name, value):
        raise AttributeError("MultipartiteState is immutable")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels

    @property
    def dims(self) -> tuple[int, ...]:
        return self.layout.dims

    def __repr__(self):
        parts = ", ".join(f"{l}:{d}" for l, d in self.layout.parts)
        return f"MultipartiteState({parts})"


class Spectrum(NamedTuple):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product under the most-significant-left convention."""
    return np.kron(as_complex_matrix(a), as_complex_matrix(b))


def kron_all(matrices: Sequence[np.ndarray]) -> np.ndarray:
    out = np.array([[1.0 + 0.0j]])
    for m in matrices:
        out = np.kron(out, m)
    return out


def eig_hermitian(matrix, herm_tol: float = 1e-8) -> Spectrum:
    """Descending eigendecomposition of a Hermitian matrix.

    Exact eigenvalue ties are canonicalized by lexicographic order of the
    eigenvector columns so output is reproducible given identical input.
    """
    arr = as_complex_matrix(matrix)
    dev = np.max(np.abs(arr - arr.conj().T)) if arr.size else 0.0
    if dev > herm_tol:
        raise InvariantError(
            f"matrix is not Hermitian within {herm_tol:g} (deviation {dev:.3e})",
            ["hermiticity"],
        )
    herm = (arr + arr.conj().T) / 2.0
    vals, vecs = np.linalg.eigh(herm)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    n = len(vals)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and vals[j + 1] == vals[i]:
            j += 1
        if j > i:
            def column_key(c):
                v = vecs[:, c]
                return tuple(np.stack([v.real, v.imag], axis=1).ravel())

            cols = sorted(range(i, j + 1), key=column_key)
            vecs[:, i : j + 1] = vecs[:, cols]
        i = j + 1
    return Spectrum(vals, vecs)


def permute_kron_factors(
    matrix: np.ndarray, dims: Sequence[int], order: Sequence[int]
) -> np.ndarray:
    """Reorder the tensor factors of a matrix over ``dims`` to ``order``."""
    dims = list(dims)
    n = len(dims)
    if sorted(order) != list(range(n)):
        raise LayoutError(f"invalid factor permutation {order}")
    tensor = matrix.reshape(dims + dims)
    axes = list(order) + [n + p for p in order]
    tensor = tensor.transpose(axes)
    d = int(np.prod(dims, dtype=np.int64))
    return np.ascontiguousarray(tensor.reshape(d, d))


def permute_parts(state: MultipartiteState, order: Sequence[str]) -> MultipartiteState:
    """Reorder subsystems of a state into the given label order."""
    if sorted(order) != sorted(state.labels):
        raise LayoutError(
            f"permutation {list(order)} is not a reordering of {list(state.labels)}"
        )
    perm = [state.layout.position(label) for label in order]
    mat = permute_kron_factors(state.matrix, state.dims, perm)
    parts = tuple(state.layout.parts[p] for p in perm)
    return MultipartiteState(mat, SubsystemLayout(parts))


def partial_trace(state: MultipartiteState, keep: Iterable[str]) -> MultipartiteState:
    """Reduced state over ``keep``, preserving the original relative order."""
    keep = set(keep)
    if not keep:
        raise LayoutError("must keep at least one subsystem")
    unknown = keep - set(state.labels)
    if unknown:
        raise LayoutError(f"unknown subsystem labels {sorted(unknown)}")
    if keep == set(state.labels):
        return state

    dims = list(state.dims)
    n = len(dims)
    tensor = state.matrix.reshape(dims + dims)
    traced = [i for i, label in enumerate(state.labels) if label not in keep]
    remaining = n
    for idx in sorted(traced, reverse=True):
        tensor = np.trace(tensor, axis1=idx, axis2=idx + remaining)
        remaining -= 1
    kept_dims = [d for i, d in enumerate(dims) if i not in traced]
    d = int(np.prod(kept_dims, dtype=np.int64))
    reduced = tensor.reshape(d, d)
    return MultipartiteState(reduced, state.layout.restrict(keep))


def _entropy_bits(eigenvalues: np.ndarray) -> float:
    vals = np.clip(np.real(eigenvalues), 0.0, 1.0)
    vals = vals[vals > 0.0]
    if vals.size == 0:
        return 0.0
    return float(-np.sum(vals * np.log2(vals)))


def von_neumann_entropy(state: MultipartiteState) -> float:
    """Entropy -sum(p log2 p) of the state's spectrum, in bits."""
    return _entropy_bits(np.linalg.eigvalsh(state.matrix))


def conditional_mutual_information(
    state: MultipartiteState,
    part_a: Sequence[str],
    part_b: Sequence[str],
    part_e: Sequence[str],
    clamp_tol: float = 1e-9,
) -> float:
    """I(A;E|B) = S(AB) + S(BE) - S(ABE) - S(B), in bits.

    The three parts must partition the layout labels; ``part_b`` may be
    empty, in which case this is the mutual information I(A;E).  Values
    within ``clamp_tol`` of zero are clamped to exactly zero.
    """
    a, b, e = list(part_a), list(part_b), list(part_e)
    groups = a + b + e
    if len(set(groups)) != len(groups):
        raise LayoutError("partition groups overlap")
    if set(groups) != set(state.labels):
        raise LayoutError(
            f"partition {groups} does not cover layout labels {list(state.labels)}"
        )
    if not a or not e:
        raise LayoutError("first and third partition groups must be non-empty")

    s_ab = von_neumann_entropy(partial_trace(state, a + b))
    s_be = von_neumann_entropy(partial_trace(state, b + e))
    s_abe = von_neumann_entropy(state)
    s_b = von_neumann_entropy(partial_trace(state, b)) if b else 0.0
    value = s_ab + s_be - s_abe - s_b
    if abs(value) <= clamp_tol:
        return 0.0
    return value


def mutual_information(
    state: MultipartiteState, part_a: Sequence[str], part_e: Sequence[str]
) -> float:
    return conditional_mutual_information(state, part_a, (), part_e)


def pure_state(vector, layout) -> MultipartiteState:
    """Density matrix |psi><psi| of a (normalized) state vector."""
    vec = np.asarray(vector, dtype=complex).reshape(-1)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise InvariantError("state vector must be nonzero", ["norm"])
    vec = vec / norm
    return MultipartiteState(np.outer(vec, vec.conj()), layout)


def bell_state(labels: Sequence[str] = ("A", "B")) -> MultipartiteState:
    """The two-qubit state (|00> + |11>)/sqrt(2)."""
    if len(labels) != 2:
        raise LayoutError("bell_state needs exactly two labels")
    vec = np.zeros(4)
    vec[0] = vec[3] = 1.0
    return pure_state(vec, [(labels[0], 2), (labels[1], 2)])


def ghz_state(labels: Sequence[str], dim: int = 2) -> MultipartiteState:
    """The n-party state (|0...0> + ... + |d-1...d-1>)/sqrt(d)."""
    n = len(labels)
    if n < 2:
        raise LayoutError("ghz_state needs at least two labels")
    vec = np.zeros(dim**n)
    step = (dim**n - 1) // (dim - 1)
    vec[::step] = 1.0
    return pure_state(vec, [(label, dim) for label in labels])


def maximally_mixed(layout) -> MultipartiteState:
    lay = SubsystemLayout.coerce(layout)
    return MultipartiteState(np.eye(lay.dim) / lay.dim, lay)
