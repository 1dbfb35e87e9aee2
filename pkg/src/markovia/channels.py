"""Completely positive maps as Kraus channels on labeled subsystems.

Channels may be rectangular (output space larger than input), so maps that
enlarge a subsystem by attaching an environment are first-class objects.
Layout labels on a channel are formal: ``apply`` matches them positionally
against the target labels of the state being acted on.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvariantError, LayoutError
from .states import (
    MultipartiteState,
    SubsystemLayout,
    as_complex_matrix,
    kron_all,
    permute_parts,
)

TP_TOL = 1e-9
CP_TOL = 1e-9


class KrausChannel:
    """Trace-preserving CP map given by Kraus operators.

    Complete positivity is structural for a Kraus presentation (the Choi
    matrix is a sum of outer products); trace preservation is validated on
    construction.
    """

    __slots__ = ("kraus_ops", "in_layout", "out_layout")

    def __init__(self, kraus_ops, in_layout, out_layout, *, tp_tol: float = TP_TOL):
        ops = tuple(as_complex_matrix(k, square=False) for k in kraus_ops)
        if not ops:
            raise InvariantError("channel needs at least one Kraus operator", ["kraus"])
        in_lay = SubsystemLayout.coerce(in_layout)
        out_lay = SubsystemLayout.coerce(out_layout)
        shape = (out_lay.dim, in_lay.dim)
        for k in ops:
            if k.shape != shape:
                raise LayoutError(
                    f"Kraus operator shape {k.shape} does not match layouts {shape}"
                )
        gram = sum(k.conj().T @ k for k in ops)
        dev = np.max(np.abs(gram - np.eye(in_lay.dim)))
        if dev > tp_tol:
            raise InvariantError(
                f"channel is not trace preserving within {tp_tol:g} "
                f"(deviation {dev:.3e})",
                ["trace-preserving"],
            )
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "kraus_ops", ops)
        object.__setattr__(self, "in_layout", in_lay)
        object.__setattr__(self, "out_layout", out_lay)

    def __setattr__(self, name, value):
        raise AttributeError("KrausChannel is immutable")

    @property
    def in_dim(self) -> int:
        return self.in_layout.dim

    @property
    def out_dim(self) -> int:
        return self.out_layout.dim

    def act(self, matrix: np.ndarray) -> np.ndarray:
        """Raw action sum_i K_i X K_i^dag on a bare matrix."""
        return sum(k @ matrix @ k.conj().T for k in self.kraus_ops)

    def __repr__(self):
        return (
            f"KrausChannel({len(self.kraus_ops)} ops, "
            f"{self.in_layout.dims} -> {self.out_layout.dims})"
        )


def _default_layout(dim: int, label: str = "q") -> SubsystemLayout:
    return SubsystemLayout(((label, dim),))


def identity_channel(layout) -> KrausChannel:
    lay = SubsystemLayout.coerce(layout)
    return KrausChannel([np.eye(lay.dim)], lay, lay)


def ad_unitary(unitary, layout=None, *, unitary_tol: float = 1e-9) -> KrausChannel:
    """Single-Kraus channel X -> U X U^dag."""
    u = as_complex_matrix(unitary)
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if dev > unitary_tol:
        raise InvariantError(
            f"matrix is not unitary within {unitary_tol:g} (deviation {dev:.3e})",
            ["unitarity"],
        )
    lay = _default_layout(u.shape[0]) if layout is None else SubsystemLayout.coerce(layout)
    return KrausChannel([u], lay, lay)


def depolarizing_channel(layout) -> KrausChannel:
    """Completely depolarizing channel X -> tr(X) I/d."""
    lay = SubsystemLayout.coerce(layout)
    d = lay.dim
    ops = []
    for i in range(d):
        for j in range(d):
            k = np.zeros((d, d), dtype=complex)
            k[i, j] = 1.0 / np.sqrt(d)
            ops.append(k)
    return KrausChannel(ops, lay, lay)


def append_state_channel(in_layout, env_state: MultipartiteState) -> KrausChannel:
    """Channel X -> X (x) sigma attaching a fixed environment state."""
    in_lay = SubsystemLayout.coerce(in_layout)
    overlap = set(in_lay.labels) & set(env_state.labels)
    if overlap:
        raise LayoutError(f"environment labels collide with input: {sorted(overlap)}")
    vals, vecs = np.linalg.eigh(env_state.matrix)
    ops = []
    eye = np.eye(in_lay.dim)
    for lam, vec in zip(vals, vecs.T):
        if lam < 1e-14:
            continue
        ops.append(np.kron(eye, np.sqrt(lam) * vec.reshape(-1, 1)))
    out_lay = SubsystemLayout(in_lay.parts + env_state.layout.parts)
    return KrausChannel(ops, in_lay, out_lay)


def replace_with_state_channel(in_layout, state: MultipartiteState) -> KrausChannel:
    """Channel X -> tr(X) sigma discarding the input entirely."""
    in_lay = SubsystemLayout.coerce(in_layout)
    vals, vecs = np.linalg.eigh(state.matrix)
    ops = []
    for lam, vec in zip(vals, vecs.T):
        if lam < 1e-14:
            continue
        for b in range(in_lay.dim):
            k = np.zeros((state.dim, in_lay.dim), dtype=complex)
            k[:, b] = np.sqrt(lam) * vec
            ops.append(k)
    return KrausChannel(ops, in_lay, state.layout)


def apply(
    channel: KrausChannel, state: MultipartiteState, target: Sequence[str]
) -> MultipartiteState:
    """Apply a channel to the ``target`` subsystems of a state.

    ``target`` lists state labels aligned one-to-one with the channel's
    input parts.  Output parts whose label matches an input part inherit
    the corresponding target label; genuinely new output parts (attached
    environments) keep their own labels and are spliced into the layout at
    the position of the first target part.
    """
    target = list(target)
    if len(target) != len(channel.in_layout):
        raise LayoutError(
            f"target {target} does not match channel input parts "
            f"{channel.in_layout.parts}"
        )
    if len(set(target)) != len(target):
        raise LayoutError("target labels must be distinct")
    for label, (_, dim) in zip(target, channel.in_layout.parts):
        if state.layout.dim_of(label) != dim:
            raise LayoutError(
                f"subsystem {label!r} has dim {state.layout.dim_of(label)}, "
                f"channel expects {dim}"
            )

    in_labels = channel.in_layout.labels
    mapped_out = []
    for olabel, odim in channel.out_layout.parts:
        if olabel in in_labels:
            mapped_out.append((target[in_labels.index(olabel)], odim))
        else:
            mapped_out.append((olabel, odim))
    rest = [label for label in state.labels if label not in target]
    out_labels = [label for label, _ in mapped_out]
    if len(set(out_labels)) != len(out_labels):
        raise LayoutError(f"output labels collide: {out_labels}")
    collisions = set(out_labels) & set(rest)
    if collisions:
        raise LayoutError(f"output labels collide with state: {sorted(collisions)}")

    moved = permute_parts(state, rest + target)
    d_rest = int(np.prod([state.layout.dim_of(l) for l in rest], dtype=np.int64)) if rest else 1
    eye = np.eye(d_rest)
    out = np.zeros(
        (d_rest * channel.out_dim, d_rest * channel.out_dim), dtype=complex
    )
    for k in channel.kraus_ops:
        big = np.kron(eye, k)
        out += big @ moved.matrix @ big.conj().T

    fine_parts = [(l, state.layout.dim_of(l)) for l in rest] + mapped_out
    result = MultipartiteState(out, fine_parts)

    final_order = []
    inserted = False
    for label, _ in state.layout.parts:
        if label in target:
            if not inserted:
                final_order.extend(out_labels)
                inserted = True
        else:
            final_order.append(label)
    return permute_parts(result, final_order)


def compose(f: KrausChannel, g: KrausChannel) -> KrausChannel:
    """Channel f after g; requires g's output layout to equal f's input."""
    if g.out_layout != f.in_layout:
        raise LayoutError(
            f"cannot compose: g outputs {g.out_layout.parts}, "
            f"f expects {f.in_layout.parts}"
        )
    ops = []
    for kf in f.kraus_ops:
        for kg in g.kraus_ops:
            prod = kf @ kg
            if np.linalg.norm(prod) > 1e-14:
                ops.append(prod)
    if not ops:
        ops = [np.zeros((f.out_dim, g.in_dim), dtype=complex)]
    return KrausChannel(ops, g.in_layout, f.out_layout)


def trace_out_channel(in_layout, labels: Iterable[str]) -> KrausChannel:
    """The partial trace over ``labels`` as an explicit Kraus channel."""
    in_lay = SubsystemLayout.coerce(in_layout)
    drop = set(labels)
    unknown = drop - set(in_lay.labels)
    if unknown:
        raise LayoutError(f"unknown subsystem labels {sorted(unknown)}")
    kept = [p for p in in_lay.parts if p[0] not in drop]
    if not kept:
        raise LayoutError("tracing out every subsystem is not supported")
    dropped_dims = [d for l, d in in_lay.parts if l in drop]
    ops = []
    for combo in np.ndindex(*dropped_dims):
        factors = []
        it = iter(combo)
        for label, dim in in_lay.parts:
            if label in drop:
                row = np.zeros((1, dim), dtype=complex)
                row[0, next(it)] = 1.0
                factors.append(row)
            else:
                factors.append(np.eye(dim, dtype=complex))
        ops.append(kron_all(factors))
    return KrausChannel(ops, in_lay, SubsystemLayout(tuple(kept)))


def direct_sum_channel(block_spec, block_channels: Sequence[KrausChannel], label: str = "B") -> KrausChannel:
    """Block-diagonal channel: identity on each left factor, the given
    channel on each right factor, conjugated by the block isometry.

    ``block_spec`` provides ``blocks`` (a list of (d_left, d_right) pairs)
    and a unitary ``isometry`` from the canonical direct-sum basis onto the
    subsystem basis.  Each block channel maps its right factor to the right
    factor plus a common set of attached parts (possibly none); the attached
    parts must agree across blocks.
    """
    blocks = list(block_spec.blocks)
    iso = as_complex_matrix(block_spec.isometry)
    d = iso.shape[0]
    if len(block_channels) != len(blocks):
        raise LayoutError(
            f"{len(blocks)} blocks but {len(block_channels)} block channels"
        )

    extras = None
    for (dl, dr), ch in zip(blocks, block_channels):
        if len(ch.in_layout) != 1 or ch.in_layout.dims[0] != dr:
            raise LayoutError(
                f"block channel input {ch.in_layout.parts} does not match right dim {dr}"
            )
        parts = ch.out_layout.parts
        if not parts or parts[0][1] != dr:
            raise LayoutError(
                f"block channel output {parts} must start with the right factor (dim {dr})"
            )
        tail = parts[1:]
        if extras is None:
            extras = tail
        elif tail != extras:
            raise LayoutError("attached output parts differ between blocks")
    e_dim = int(np.prod([dim for _, dim in extras], dtype=np.int64)) if extras else 1

    n_ops = max(len(ch.kraus_ops) for ch in block_channels)
    offsets = np.cumsum([0] + [dl * dr for dl, dr in blocks])
    ops = []
    for i in range(n_ops):
        g = np.zeros((d * e_dim, d), dtype=complex)
        for k, ((dl, dr), ch) in enumerate(zip(blocks, block_channels)):
            if i >= len(ch.kraus_ops):
                continue
            kr = ch.kraus_ops[i]
            for left in range(dl):
                base = offsets[k] + left * dr
                g[base * e_dim : (base + dr) * e_dim, base : base + dr] = kr
        ops.append(np.kron(iso, np.eye(e_dim)) @ g @ iso.conj().T)

    in_lay = SubsystemLayout(((label, d),))
    out_lay = SubsystemLayout(((label, d),) + tuple(extras))
    return KrausChannel(ops, in_lay, out_lay)


def choi_matrix(channel: KrausChannel) -> np.ndarray:
    """Choi matrix sum_ij |i><j| (x) Lambda(|i><j|)."""
    c = np.zeros(
        (channel.in_dim * channel.out_dim, channel.in_dim * channel.out_dim),
        dtype=complex,
    )
    for k in channel.kraus_ops:
        w = k.T.reshape(-1)
        c += np.outer(w, w.conj())
    return c


def is_completely_positive(channel: KrausChannel, tol: float = CP_TOL) -> bool:
    return float(np.linalg.eigvalsh(choi_matrix(channel))[0]) >= -tol


class StinespringDilation:
    """Unitary dilation of a channel from d to d*e dimensions.

    The channel action is recovered as
    ``Tr_C( V (x (x) |0_E><0_E| (x) |0_C><0_C|) V^dag )`` where E is the
    attached environment factor (dim ``anc_env_dim``) and C an ancilla of
    dim ``anc_c_dim`` that is traced out.
    """

    __slots__ = ("unitary", "in_dim", "anc_env_dim", "anc_c_dim",
                 "env_state_index", "c_state_index")

    def __init__(self, unitary, in_dim, anc_env_dim, anc_c_dim,
                 env_state_index=0, c_state_index=0, *, unitary_tol=1e-9):
        v = as_complex_matrix(unitary)
        dim = in_dim * anc_env_dim * anc_c_dim
        if v.shape != (dim, dim):
            raise LayoutError(
                f"dilation unitary has shape {v.shape}, expected {(dim, dim)}"
            )
        dev = np.max(np.abs(v.conj().T @ v - np.eye(dim)))
        if dev > unitary_tol:
            raise InvariantError(
                f"dilation is not unitary within {unitary_tol:g} "
                f"(deviation {dev:.3e})",
                ["unitarity"],
            )
        v.setflags(write=False)
        object.__setattr__(self, "unitary", v)
        object.__setattr__(self, "in_dim", int(in_dim))
        object.__setattr__(self, "anc_env_dim", int(anc_env_dim))
        object.__setattr__(self, "anc_c_dim", int(anc_c_dim))
        object.__setattr__(self, "env_state_index", int(env_state_index))
        object.__setattr__(self, "c_state_index", int(c_state_index))

    def __setattr__(self, name, value):
        raise AttributeError("StinespringDilation is immutable")

    def act(self, matrix: np.ndarray) -> np.ndarray:
        """Evaluate the dilated channel on a bare input matrix."""
        n, e, c = self.in_dim, self.anc_env_dim, self.anc_c_dim
        x = as_complex_matrix(matrix)
        total = n * e * c
        emb = np.zeros((total, total), dtype=complex)
        idx = np.arange(n) * e * c + self.env_state_index * c + self.c_state_index
        emb[np.ix_(idx, idx)] = x
        y = self.unitary @ emb @ self.unitary.conj().T
        tensor = y.reshape(n * e, c, n * e, c)
        return np.trace(tensor, axis1=1, axis2=3)


def stinespring(channel: KrausChannel) -> StinespringDilation:
    """Unitary dilation of a trace-preserving CP map.

    Requires the output dimension to be a multiple of the input dimension
    (channels that attach environment factors always are).  The ancilla
    dimension equals the number of Kraus operators.
    """
    n, m = channel.in_dim, channel.out_dim
    if m % n != 0:
        raise LayoutError(
            f"output dim {m} is not a multiple of input dim {n}; "
            "cannot dilate with a fixed environment state"
        )
    e = m // n
    c = len(channel.kraus_ops)
    total = n * e * c
    v = np.zeros((total, total), dtype=complex)
    fixed_positions = [b * e * c for b in range(n)]
    for b, pos in enumerate(fixed_positions):
        col = np.zeros(total, dtype=complex)
        for i, k in enumerate(channel.kraus_ops):
            col[np.arange(m) * c + i] = k[:, b]
        v[:, pos] = col

    chosen = [v[:, pos] for pos in fixed_positions]
    free_positions = [j for j in range(total) if j not in set(fixed_positions)]
    pool = list(range(total))
    for pos in free_positions:
        placed = False
        while pool:
            cand = np.zeros(total, dtype=complex)
            cand[pool.pop(0)] = 1.0
            for u in chosen:
                cand -= np.vdot(u, cand) * u
            norm = np.linalg.norm(cand)
            if norm > 0.5:
                cand /= norm
                v[:, pos] = cand
                chosen.append(cand)
                placed = True
                break
        if not placed:
            raise InvariantError(
                "failed to complete dilation isometry to a unitary",
                ["unitary-completion"],
            )
    return StinespringDilation(v, n, e, c)


def reduce_localized_dynamics(
    lambdas: Mapping[str, KrausChannel], dynamics: Mapping[str, KrausChannel]
) -> dict[str, KrausChannel]:
    """Per-subsystem reduced dynamics: trace out the environment after the
    joint step that follows the system-to-system-environment embedding.

    ``lambdas[s]`` maps subsystem s to (s, env); ``dynamics[s]`` is a
    trace-preserving CP map on that joint pair.  Returns the induced local
    channel on each subsystem.
    """
    if set(lambdas) != set(dynamics):
        raise LayoutError(
            f"lambdas cover {sorted(lambdas)} but dynamics cover {sorted(dynamics)}"
        )
    reduced = {}
    for label, lam in lambdas.items():
        if len(lam.in_layout) != 1 or len(lam.out_layout) != 2:
            raise LayoutError(
                f"embedding for {label!r} must map one part to a (system, env) pair"
            )
        if lam.out_layout.parts[0] != lam.in_layout.parts[0]:
            raise LayoutError(
                f"embedding for {label!r} must keep the system part first"
            )
        dyn = dynamics[label]
        if dyn.in_layout != lam.out_layout or dyn.out_layout != lam.out_layout:
            raise LayoutError(
                f"dynamics for {label!r} must act on {lam.out_layout.parts}"
            )
        env_label = lam.out_layout.parts[1][0]
        discard = trace_out_channel(lam.out_layout, [env_label])
        reduced[label] = compose(discard, compose(dyn, lam))
    return reduced
