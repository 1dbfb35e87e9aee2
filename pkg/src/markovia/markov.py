"""Constructors, certificates, and decomposition finders for Markov states.

A tripartite Markov state factorizes over a direct-sum block structure of
the conditioning subsystem: each block splits into a left factor correlated
with the first party and a right factor correlated with the environment.
The multipartite strong form does the same per subsystem, with a shared
core state over the left factors.  ``MarkovDecomposition`` captures all of
these shapes; ``reconstruct`` is the single authoritative assembler.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import algebra
from .channels import (
    KrausChannel,
    apply,
    compose,
    direct_sum_channel,
    replace_with_state_channel,
    trace_out_channel,
)
from .errors import InvariantError, LayoutError
from .measures import one_norm_distance
from .states import (
    MultipartiteState,
    SubsystemLayout,
    as_complex_matrix,
    conditional_mutual_information,
    kron_all,
    maximally_mixed,
    partial_trace,
    permute_kron_factors,
    permute_parts,
)

WEIGHT_SUM_TOL = 1e-10
MIN_WEIGHT = 1e-12
DEFAULT_CMI_TOL = 1e-9


class BlockSpec:
    """Direct-sum factorization of one subsystem's Hilbert space.

    ``blocks`` lists (d_left, d_right) per block; ``isometry`` is the
    unitary mapping the canonical direct-sum basis (blocks concatenated,
    left index major within a block) onto the subsystem basis.
    """

    __slots__ = ("blocks", "isometry")

    def __init__(self, blocks, isometry, *, unitary_tol: float = 1e-9):
        blocks = tuple((int(l), int(r)) for l, r in blocks)
        if not blocks or any(l < 1 or r < 1 for l, r in blocks):
            raise InvariantError(f"invalid block dims {blocks}", ["blocks"])
        iso = as_complex_matrix(isometry)
        dim = sum(l * r for l, r in blocks)
        if iso.shape != (dim, dim):
            raise LayoutError(
                f"isometry shape {iso.shape} does not match total block dim {dim}"
            )
        dev = np.max(np.abs(iso.conj().T @ iso - np.eye(dim)))
        if dev > unitary_tol:
            raise InvariantError(
                f"isometry is not unitary within {unitary_tol:g} "
                f"(deviation {dev:.3e})",
                ["unitarity"],
            )
        iso.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "isometry", iso)

    def __setattr__(self, name, value):
        raise AttributeError("BlockSpec is immutable")

    @property
    def dim(self) -> int:
        return sum(l * r for l, r in self.blocks)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(np.cumsum([0] + [l * r for l, r in self.blocks])[:-1])

    def column_slice(self, k: int) -> np.ndarray:
        """Isometry columns embedding block k's left (x) right factors."""
        dl, dr = self.blocks[k]
        off = self.offsets[k]
        return self.isometry[:, off : off + dl * dr]

    @classmethod
    def trivial(cls, dim: int) -> "BlockSpec":
        return cls([(dim, 1)], np.eye(dim))


@dataclass(frozen=True)
class MarkovReport:
    """Conditional-mutual-information certificate for a candidate state."""

    cmi_values: dict[str, float]
    certified: bool
    tolerance: float
    residual: float

    @classmethod
    def from_cmi(cls, cmi_values: Mapping[str, float], tolerance: float) -> "MarkovReport":
        values = dict(cmi_values)
        worst = max(values.values(), default=0.0)
        return cls(values, worst <= tolerance, tolerance, worst)


@dataclass(frozen=True)
class DecompositionFailure:
    """Outcome of a decomposition search that did not produce a result."""

    reason: str
    cmi: float
    report: MarkovReport


class MarkovDecomposition:
    """Block structure, weights, and factor states realizing a Markov state.

    ``system`` lists the system subsystems in layout order.  Subsystems in
    ``specs`` carry a block decomposition and a paired environment label in
    ``env``; the remaining (undecomposed) subsystems join the core factor.
    ``weights`` is indexed by one block index per decomposed subsystem, in
    system order.  ``cores`` maps each multi-index to the core state over
    (left factors + undecomposed subsystems); ``env_factors[s][j]`` is the
    state on (right factor j of s, environment of s).  Entries touched only
    by weights below ``MIN_WEIGHT`` may be omitted (None).
    """

    __slots__ = ("system", "env", "specs", "weights", "cores", "env_factors")

    def __init__(self, system, env, specs, weights, cores, env_factors):
        system = tuple(str(s) for s in system)
        env = {str(k): str(v) for k, v in env.items()}
        specs = dict(specs)
        if set(env) != set(specs):
            raise LayoutError("decomposed subsystems and environment pairing differ")
        unknown = set(specs) - set(system)
        if unknown:
            raise LayoutError(f"specs for unknown subsystems {sorted(unknown)}")
        all_labels = list(system) + list(env.values())
        if len(set(all_labels)) != len(all_labels):
            raise LayoutError(f"duplicate labels in {all_labels}")

        order = [s for s in system if s in specs]
        shape = tuple(len(specs[s].blocks) for s in order)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != shape:
            raise LayoutError(
                f"weights shape {weights.shape} does not match block counts {shape}"
            )
        if np.any(weights < 0):
            raise InvariantError("weights must be nonnegative", ["weights"])
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvariantError(
                f"weights sum to {weights.sum():.12g}, not 1", ["weights"]
            )
        weights.setflags(write=False)

        cores = dict(cores)
        env_factors = {s: tuple(v) for s, v in env_factors.items()}
        if set(env_factors) != set(specs):
            raise LayoutError("env_factors must cover exactly the decomposed subsystems")
        for s in order:
            if len(env_factors[s]) != len(specs[s].blocks):
                raise LayoutError(f"need one env factor per block of {s!r}")

        object.__setattr__(self, "system", system)
        object.__setattr__(self, "env", env)
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "cores", cores)
        object.__setattr__(self, "env_factors", env_factors)
        self._validate_components()

    def __setattr__(self, name, value):
        raise AttributeError("MarkovDecomposition is immutable")

    @property
    def spec_order(self) -> tuple[str, ...]:
        return tuple(s for s in self.system if s in self.specs)

    def _used_indices(self):
        for idx in np.ndindex(self.weights.shape):
            if self.weights[idx] >= MIN_WEIGHT:
                yield idx

    def _validate_components(self):
        order = self.spec_order
        env_dims = {}
        core_dims = {}
        for idx in self._used_indices():
            core = self.cores.get(idx)
            if core is None:
                raise InvariantError(
                    f"missing core state for weight index {idx}", ["components"]
                )
            if core.labels != self.system:
                raise LayoutError(
                    f"core at {idx} has labels {core.labels}, expected {self.system}"
                )
            for s, dim in zip(core.labels, core.dims):
                if s in self.specs:
                    j = idx[order.index(s)]
                    expect = self.specs[s].blocks[j][0]
                    if dim != expect:
                        raise LayoutError(
                            f"core at {idx}: part {s!r} has dim {dim}, "
                            f"expected left dim {expect}"
                        )
                else:
                    core_dims.setdefault(s, dim)
                    if core_dims[s] != dim:
                        raise LayoutError(f"inconsistent dims for subsystem {s!r}")
            for q, s in enumerate(order):
                j = idx[q]
                factor = self.env_factors[s][j]
                if factor is None:
                    raise InvariantError(
                        f"missing env factor for {s!r} block {j}", ["components"]
                    )
                expect_labels = (s, self.env[s])
                if factor.labels != expect_labels:
                    raise LayoutError(
                        f"env factor for {s!r} block {j} has labels {factor.labels}, "
                        f"expected {expect_labels}"
                    )
                dr = self.specs[s].blocks[j][1]
                if factor.dims[0] != dr:
                    raise LayoutError(
                        f"env factor for {s!r} block {j} has right dim "
                        f"{factor.dims[0]}, expected {dr}"
                    )
                env_dims.setdefault(s, factor.dims[1])
                if env_dims[s] != factor.dims[1]:
                    raise LayoutError(f"inconsistent environment dims for {s!r}")

    def system_dim(self, label: str) -> int:
        if label in self.specs:
            return self.specs[label].dim
        for idx in self._used_indices():
            return self.cores[idx].layout.dim_of(label)
        raise InvariantError("decomposition has no usable components", ["components"])

    def env_dim(self, label: str) -> int:
        j = next(
            j
            for j, f in enumerate(self.env_factors[label])
            if f is not None
        )
        return self.env_factors[label][j].dims[1]

    def full_layout(self) -> SubsystemLayout:
        parts = []
        for s in self.system:
            parts.append((s, self.system_dim(s)))
            if s in self.specs:
                parts.append((self.env[s], self.env_dim(s)))
        return SubsystemLayout(tuple(parts))

    def block_dims(self, label: str) -> list[tuple[int, int]]:
        return list(self.specs[label].blocks)


def reconstruct(decomp: MarkovDecomposition) -> MultipartiteState:
    """Assemble the full state realized by a decomposition."""
    system = decomp.system
    order = decomp.spec_order
    layout = decomp.full_layout()
    dim = layout.dim

    # Factor order as built: core parts (one per system label), then the
    # (right factor, environment) pair of each decomposed subsystem.  The
    # final interleaved order puts each pair right after its core part.
    n = len(system)
    build_positions = {}
    for i, s in enumerate(system):
        build_positions[("core", s)] = i
    for q, s in enumerate(order):
        build_positions[("right", s)] = n + 2 * q
        build_positions[("env", s)] = n + 2 * q + 1
    fine_order = []
    for s in system:
        fine_order.append(build_positions[("core", s)])
        if s in decomp.specs:
            fine_order.append(build_positions[("right", s)])
            fine_order.append(build_positions[("env", s)])

    out = np.zeros((dim, dim), dtype=complex)
    for idx in np.ndindex(decomp.weights.shape):
        w = float(decomp.weights[idx])
        if w < MIN_WEIGHT:
            continue
        core = decomp.cores[idx]
        factors = [core.matrix]
        build_dims = list(core.dims)
        for q, s in enumerate(order):
            factor = decomp.env_factors[s][idx[q]]
            factors.append(factor.matrix)
            build_dims.extend(factor.dims)
        big = kron_all(factors)
        big = permute_kron_factors(big, build_dims, fine_order)

        embed_factors = []
        for s in system:
            if s in decomp.specs:
                j = idx[order.index(s)]
                embed_factors.append(decomp.specs[s].column_slice(j))
                embed_factors.append(np.eye(decomp.env_dim(s)))
            else:
                embed_factors.append(np.eye(decomp.system_dim(s)))
        emb = kron_all(embed_factors)
        out += w * (emb @ big @ emb.conj().T)

    return MultipartiteState(out, layout)


def verify_decomposition(state: MultipartiteState, decomp: MarkovDecomposition) -> float:
    """Trace-norm residual between a state and its claimed decomposition."""
    expected = decomp.full_layout()
    if state.layout != expected:
        raise LayoutError(
            f"state layout {state.layout.parts} does not match "
            f"decomposition layout {expected.parts}"
        )
    return one_norm_distance(state, reconstruct(decomp))


def tripartite_decomposition(
    block_spec: BlockSpec,
    weights,
    components: Sequence[tuple[MultipartiteState | None, MultipartiteState | None]],
    labels: Sequence[str] = ("A", "B", "E"),
) -> MarkovDecomposition:
    """Decomposition of a state over (first, conditioning, environment) labels.

    ``components[k]`` holds the pair (state on first+left factor, state on
    right factor+environment) for block k.
    """
    a, b, e = labels
    if len(components) != len(block_spec.blocks):
        raise LayoutError("need one component pair per block")
    cores = {(k,): pair[0] for k, pair in enumerate(components)}
    env_factors = {b: tuple(pair[1] for pair in components)}
    return MarkovDecomposition(
        system=(a, b),
        env={b: e},
        specs={b: block_spec},
        weights=np.asarray(weights, dtype=float),
        cores=cores,
        env_factors=env_factors,
    )


def construct_tripartite_markov(
    decomp: MarkovDecomposition, layout=None
) -> MultipartiteState:
    """Assemble a tripartite Markov state from its block decomposition."""
    if len(decomp.system) != 2 or decomp.spec_order != (decomp.system[1],):
        raise LayoutError(
            "tripartite construction needs two system parts with the second decomposed"
        )
    state = reconstruct(decomp)
    if layout is not None:
        wanted = SubsystemLayout.coerce(layout)
        state = permute_parts(state, wanted.labels)
        if state.layout != wanted:
            raise LayoutError(
                f"requested layout {wanted.parts} does not match {state.layout.parts}"
            )
    return state


def construct_sm_state(
    decomp: MarkovDecomposition, pattern: str | None = None
) -> MultipartiteState:
    """Assemble a strong Markov state (every subsystem paired with an
    environment, or all but the leading one)."""
    undecomposed = [s for s in decomp.system if s not in decomp.specs]
    if not undecomposed:
        found = "2N"
    elif undecomposed == [decomp.system[0]]:
        found = "2N-1"
    else:
        raise LayoutError(
            f"only the leading subsystem may lack an environment, got {undecomposed}"
        )
    if pattern is not None and pattern != found:
        raise LayoutError(f"decomposition has pattern {found}, not {pattern}")
    return reconstruct(decomp)


def recovery_channels(decomp: MarkovDecomposition) -> dict[str, KrausChannel]:
    """Per-subsystem CP maps rebuilding each (subsystem, environment) pair
    from the subsystem alone: identity on left factors, replace-with-state
    on right factors."""
    channels = {}
    for s in decomp.spec_order:
        spec = decomp.specs[s]
        e_label = decomp.env[s]
        e_dim = decomp.env_dim(s)
        block_channels = []
        for j, (dl, dr) in enumerate(spec.blocks):
            factor = decomp.env_factors[s][j]
            if factor is None:
                factor = maximally_mixed(((s, dr), (e_label, e_dim)))
            block_channels.append(
                replace_with_state_channel(((s, dr),), factor)
            )
        channels[s] = direct_sum_channel(spec, block_channels, label=s)
    return channels


def phi_channels(decomp: MarkovDecomposition) -> dict[str, KrausChannel]:
    """The induced subsystem channels (recovery followed by tracing out the
    environment); they fix the reduced system state of the decomposition."""
    channels = {}
    for s, lam in recovery_channels(decomp).items():
        discard = trace_out_channel(lam.out_layout, [decomp.env[s]])
        channels[s] = compose(discard, lam)
    return channels


def wm_certificate(
    state: MultipartiteState,
    pairing: Sequence[tuple[str, str | None]],
    tol: float = DEFAULT_CMI_TOL,
) -> MarkovReport:
    """Sufficient weak-Markov certificate from per-pair conditional mutual
    informations I(E_i ; rest | S_i).

    ``certified`` implies the state admits per-subsystem recovery maps (so
    it is weak Markov); ``certified == False`` does NOT prove the converse.
    Pairs with no environment (None) contribute no condition.
    """
    covered = []
    for s, e in pairing:
        covered.append(s)
        if e is not None:
            covered.append(e)
    if sorted(covered) != sorted(state.labels):
        raise LayoutError(
            f"pairing covers {sorted(covered)}, state has {sorted(state.labels)}"
        )
    cmi_values = {}
    for s, e in pairing:
        if e is None:
            continue
        rest = [l for l in state.labels if l not in (s, e)]
        if not rest:
            continue
        value = conditional_mutual_information(state, [e], [s], rest)
        cmi_values[f"I({e};{','.join(rest)}|{s})"] = value
    return MarkovReport.from_cmi(cmi_values, tol)


def check_sm_replacement(
    rho_s: MultipartiteState,
    phis: Mapping[str, KrausChannel],
    subset: Iterable[str],
) -> float:
    """Residual of replacing the channels on ``subset`` by the identity.

    Applies the given per-subsystem channel to every subsystem not in
    ``subset`` and returns the trace-norm distance to the input; strong
    Markov states give (numerically) zero for every subset.
    """
    subset = set(subset)
    unknown = subset - set(phis)
    if unknown:
        raise LayoutError(f"subset labels {sorted(unknown)} have no channel")
    for label, ch in phis.items():
        if label not in rho_s.labels:
            raise LayoutError(f"channel subsystem {label!r} not in state")
        if len(ch.in_layout) != 1 or ch.in_layout != ch.out_layout:
            raise LayoutError(
                f"channel for {label!r} must map its subsystem to itself"
            )
    current = rho_s
    for label in rho_s.labels:
        if label in phis and label not in subset:
            current = apply(phis[label], current, [label])
    current = permute_parts(current, rho_s.labels)
    return one_norm_distance(current, rho_s)


def _ptrace_raw(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    tensor = matrix.reshape(list(dims) + list(dims))
    n = len(dims)
    traced = [i for i in range(n) if i not in keep]
    remaining = n
    for idx in sorted(traced, reverse=True):
        tensor = np.trace(tensor, axis1=idx, axis2=idx + remaining)
        remaining -= 1
    d = int(np.prod([dims[i] for i in keep], dtype=np.int64))
    return tensor.reshape(d, d)


def _petz_adjoint_superop(rho_be: np.ndarray, rho_b: np.ndarray, d_e: int) -> np.ndarray:
    """Superoperator of the adjoint of the transpose-channel recovery map.

    The recovery map rebuilds the (conditioning, environment) pair from the
    conditioning subsystem; its trace-then-recover composition is a channel
    on the conditioning subsystem fixing its reduced state, and the fixed
    points of the (unital) adjoint form the algebra whose block structure
    is the Markov decomposition.
    """
    d_b = rho_b.shape[0]
    vals_b, vecs_b = np.linalg.eigh(rho_b)
    inv_sqrt_b = vecs_b @ np.diag(1.0 / np.sqrt(np.maximum(vals_b, 1e-300))) @ vecs_b.conj().T
    vals_be, vecs_be = np.linalg.eigh(rho_be)
    sqrt_be = vecs_be @ np.diag(np.sqrt(np.clip(vals_be, 0.0, None))) @ vecs_be.conj().T

    cols = np.zeros((d_b * d_b, d_b * d_b), dtype=complex)
    eye_e = np.eye(d_e)
    for j in range(d_b * d_b):
        y = algebra.unvec(np.eye(d_b * d_b)[:, j], d_b)
        big = sqrt_be @ np.kron(y, eye_e) @ sqrt_be
        reduced = np.trace(big.reshape(d_b, d_e, d_b, d_e), axis1=1, axis2=3)
        cols[:, j] = algebra.vec(inv_sqrt_b @ reduced @ inv_sqrt_b)
    return cols


def _canonical_span_basis(cols: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(cols) closest to the standard
    basis (used when a block factor is trivial and the basis is free)."""
    d, k = cols.shape
    proj = cols @ cols.conj().T
    chosen = []
    for i in range(d):
        v = proj[:, i].copy()
        for u in chosen:
            v -= np.vdot(u, v) * u
        norm = np.linalg.norm(v)
        if norm > 1e-7:
            chosen.append(v / norm)
        if len(chosen) == k:
            return np.column_stack(chosen)
    return cols


def _canonical_phases(cols: np.ndarray, d_left: int, d_right: int) -> np.ndarray:
    """Fix per-left and per-right phases so leading entries are real positive."""
    out = cols.copy()
    for left in range(d_left):
        col = out[:, left * d_right]
        lead = np.flatnonzero(np.abs(col) > 1e-8)
        if lead.size:
            phase = col[lead[0]] / abs(col[lead[0]])
            out[:, left * d_right : (left + 1) * d_right] *= np.conj(phase)
    for r in range(1, d_right):
        col = out[:, r]
        lead = np.flatnonzero(np.abs(col) > 1e-8)
        if lead.size:
            phase = col[lead[0]] / abs(col[lead[0]])
            out[:, r::d_right] *= np.conj(phase)
    return out


def find_markov_decomposition(
    state: MultipartiteState, tol: float = DEFAULT_CMI_TOL
) -> MarkovDecomposition | DecompositionFailure:
    """Search for a block decomposition realizing a tripartite state.

    The layout order is (first party, conditioning subsystem, environment).
    If the conditional mutual information exceeds ``tol`` the search fails
    with the value attached.  Otherwise the block structure is read off the
    fixed-point algebra of the adjoint recovery channel on the conditioning
    subsystem and the factor states are projected out of the input.  The
    result is always checked by ``verify_decomposition``; a candidate that
    does not reproduce the state within ``10 * tol`` is reported as an
    inconclusive failure rather than returned.
    """
    if len(state.labels) != 3:
        raise LayoutError(f"need a tripartite layout, got {state.labels}")
    a, b, e = state.labels
    d_a, d_b, d_e = state.dims
    if d_b > 16:
        raise LayoutError(f"conditioning subsystem dim {d_b} exceeds supported 16")

    cmi = conditional_mutual_information(state, [a], [b], [e])
    report = MarkovReport.from_cmi({f"I({a};{e}|{b})": cmi}, tol)
    if cmi > tol:
        return DecompositionFailure("cmi-above-tolerance", cmi, report)

    rho_b = partial_trace(state, [b]).matrix
    rho_be = partial_trace(state, [b, e]).matrix

    vals, vecs = np.linalg.eigh(rho_b)
    support = vals > 1e-12
    rank = int(np.sum(support))
    v_s = vecs[:, ::-1][:, :rank]
    kernel = vecs[:, ::-1][:, rank:]
    rho_b_s = v_s.conj().T @ rho_b @ v_s
    emb = np.kron(v_s, np.eye(d_e))
    rho_be_s = emb.conj().T @ rho_be @ emb

    superop = _petz_adjoint_superop(rho_be_s, rho_b_s, d_e)
    basis = algebra.fixed_point_basis(superop, rank)
    if not basis:
        return DecompositionFailure("inconclusive", cmi, report)

    rng = np.random.default_rng(20240917)
    try:
        raw_blocks = algebra.algebra_block_structure(basis, rank, rng)
    except algebra.AlgebraStructureError:
        return DecompositionFailure("inconclusive", cmi, report)

    blocks = [(v_s @ cols, dl, dr) for cols, dl, dr in raw_blocks]
    if kernel.shape[1] > 0:
        blocks.append((kernel, kernel.shape[1], 1))

    weighted = []
    for cols, dl, dr in blocks:
        weight = float(np.real(np.trace(cols.conj().T @ rho_b @ cols)))
        weighted.append((cols, dl, dr, max(weight, 0.0)))
    weighted.sort(key=lambda t: (-t[1], -t[2], -t[3]))

    iso_columns = []
    dims_list = []
    cores = {}
    env_list = []
    weights = []
    for k, (cols, dl, dr, weight) in enumerate(weighted):
        if dl == 1 or dr == 1:
            cols = _canonical_span_basis(cols)
        cols = _canonical_phases(cols, dl, dr)
        iso_columns.append(cols)
        dims_list.append((dl, dr))
        weights.append(weight)
        if weight < MIN_WEIGHT:
            cores[(k,)] = None
            env_list.append(None)
            continue
        embed = kron_all([np.eye(d_a), cols, np.eye(d_e)])
        projected = embed.conj().T @ state.matrix @ embed
        projected = projected / weight
        dims4 = [d_a, dl, dr, d_e]
        core_m = _ptrace_raw(projected, dims4, [0, 1])
        env_m = _ptrace_raw(projected, dims4, [2, 3])
        cores[(k,)] = MultipartiteState(core_m, ((a, d_a), (b, dl)))
        env_list.append(MultipartiteState(env_m, ((b, dr), (e, d_e))))

    total = sum(weights)
    weights = [w / total if w >= MIN_WEIGHT else 0.0 for w in weights]
    spec = BlockSpec(dims_list, np.hstack(iso_columns))
    decomp = tripartite_decomposition(
        spec,
        weights,
        list(zip((cores[(k,)] for k in range(len(weighted))), env_list)),
        labels=(a, b, e),
    )
    residual = verify_decomposition(state, decomp)
    if residual > 10 * tol:
        return DecompositionFailure("inconclusive", cmi, report)
    return decomp
