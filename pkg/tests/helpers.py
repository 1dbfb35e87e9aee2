"""Shared random generators for the test suite (all explicitly seeded)."""
from __future__ import annotations

import numpy as np

import markovia as m


def random_density(rng, dim, rank=None):
    """Full-rank (by default) random density matrix, Wishart-style."""
    rank = 2 * dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_state(rng, layout, rank=None) -> m.MultipartiteState:
    lay = m.SubsystemLayout.coerce(layout)
    return m.MultipartiteState(random_density(rng, lay.dim, rank), lay)


def random_unitary(rng, dim):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_pure(rng, layout) -> m.MultipartiteState:
    lay = m.SubsystemLayout.coerce(layout)
    vec = rng.standard_normal(lay.dim) + 1j * rng.standard_normal(lay.dim)
    return m.pure_state(vec, lay)


def random_weights(rng, shape):
    """Weights bounded away from zero so every block stays detectable."""
    w = 0.5 + rng.random(np.prod(shape))
    return (w / w.sum()).reshape(shape)


def random_block_partition(rng, dim):
    """Random multiset of (d_left, d_right) pairs with sum of products dim."""
    blocks = []
    remaining = dim
    while remaining:
        options = [
            (l, r)
            for l in range(1, remaining + 1)
            for r in range(1, remaining + 1)
            if l * r <= remaining
        ]
        l, r = options[rng.integers(len(options))]
        blocks.append((l, r))
        remaining -= l * r
    return blocks


def random_tripartite_instance(
    rng, d_a, d_b, d_e, blocks=None, labels=("A", "B", "E"), rotate=True
):
    """Random Markov decomposition over (A, B, E) plus its assembled state."""
    a, b, e = labels
    if blocks is None:
        blocks = random_block_partition(rng, d_b)
    iso = random_unitary(rng, d_b) if rotate else np.eye(d_b)
    spec = m.BlockSpec(blocks, iso)
    weights = random_weights(rng, (len(blocks),))
    components = []
    for dl, dr in blocks:
        core = random_state(rng, [(a, d_a), (b, dl)])
        env = random_state(rng, [(b, dr), (e, d_e)])
        components.append((core, env))
    decomp = m.tripartite_decomposition(spec, weights, components, labels=labels)
    return decomp, m.construct_tripartite_markov(decomp)


def random_sm_instance(rng, n_parts, pattern="2N", d_e=2, n_blocks=2):
    """Random strong-Markov decomposition with qubit-scale subsystems.

    Each decomposed subsystem gets ``n_blocks`` blocks of shape (1, 1)
    unless n_blocks == 1, in which case a single (1, 2) block is used.
    """
    system = tuple(f"S{i}" for i in range(1, n_parts + 1))
    decomposed = system if pattern == "2N" else system[1:]
    env = {s: f"E{s[1:]}" for s in decomposed}
    specs = {}
    for s in decomposed:
        if n_blocks == 1:
            blocks = [(1, 2)]
            dim = 2
        else:
            blocks = [(1, 1)] * n_blocks
            dim = n_blocks
        specs[s] = m.BlockSpec(blocks, random_unitary(rng, dim))
    shape = tuple(len(specs[s].blocks) for s in decomposed)
    weights = random_weights(rng, shape)
    cores = {}
    for idx in np.ndindex(shape):
        parts = []
        for s in system:
            if s in specs:
                j = idx[decomposed.index(s)]
                parts.append((s, specs[s].blocks[j][0]))
            else:
                parts.append((s, 2))
        cores[idx] = random_state(rng, parts)
    env_factors = {}
    for s in decomposed:
        factors = []
        for dl, dr in specs[s].blocks:
            factors.append(random_state(rng, [(s, dr), (env[s], d_e)]))
        env_factors[s] = tuple(factors)
    decomp = m.MarkovDecomposition(
        system=system,
        env=env,
        specs=specs,
        weights=weights,
        cores=cores,
        env_factors=env_factors,
    )
    return decomp, m.construct_sm_state(decomp)
