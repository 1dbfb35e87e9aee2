import numpy as np
import pytest

import markovia as m
from markovia.errors import LayoutError

from helpers import (
    random_block_partition,
    random_state,
    random_tripartite_instance,
    random_unitary,
)


def test_product_state_single_trivial_block():
    rng = np.random.default_rng(0)
    rho_ab = random_state(rng, [("A", 2), ("B", 2)])
    rho_e = random_state(rng, [("E", 2)])
    st = m.MultipartiteState(
        np.kron(rho_ab.matrix, rho_e.matrix), [("A", 2), ("B", 2), ("E", 2)]
    )
    result = m.find_markov_decomposition(st)
    assert isinstance(result, m.MarkovDecomposition)
    assert result.block_dims("B") == [(2, 1)]
    iso = result.specs["B"].isometry
    # identity up to a per-column phase
    assert np.max(np.abs(np.abs(iso) - np.eye(2))) < 1e-9
    assert m.verify_decomposition(st, result) < 1e-10


def test_ghz_fails_with_unit_cmi():
    result = m.find_markov_decomposition(m.ghz_state(["A", "B", "E"]))
    assert isinstance(result, m.DecompositionFailure)
    assert result.reason == "cmi-above-tolerance"
    assert abs(result.cmi - 1.0) < 1e-9
    assert not result.report.certified


def test_round_trip_known_blocks():
    rng = np.random.default_rng(1)
    decomp, st = random_tripartite_instance(
        rng, 2, 4, 2, blocks=[(1, 2), (2, 1)], rotate=False
    )
    rotated = m.apply(m.ad_unitary(random_unitary(rng, 4)), st, ["B"])
    result = m.find_markov_decomposition(rotated)
    assert isinstance(result, m.MarkovDecomposition)
    assert sorted(result.block_dims("B")) == [(1, 2), (2, 1)]
    assert m.verify_decomposition(rotated, result) < 1e-8


def test_round_trip_single_tensor_block():
    rng = np.random.default_rng(2)
    decomp, st = random_tripartite_instance(rng, 2, 4, 2, blocks=[(2, 2)])
    result = m.find_markov_decomposition(st)
    assert isinstance(result, m.MarkovDecomposition)
    assert result.block_dims("B") == [(2, 2)]
    assert m.verify_decomposition(st, result) < 1e-8


def test_round_trip_classical_mixture():
    rng = np.random.default_rng(3)
    decomp, st = random_tripartite_instance(
        rng, 2, 3, 2, blocks=[(1, 1), (1, 1), (1, 1)]
    )
    result = m.find_markov_decomposition(st)
    assert isinstance(result, m.MarkovDecomposition)
    assert result.block_dims("B") == [(1, 1), (1, 1), (1, 1)]
    assert m.verify_decomposition(st, result) < 1e-8


def test_round_trip_multiset_fuzz():
    rng = np.random.default_rng(4)
    for trial in range(12):
        d_b = int(rng.choice([2, 3, 4, 6]))
        blocks = random_block_partition(rng, d_b)
        decomp, st = random_tripartite_instance(rng, 2, d_b, 2, blocks=blocks)
        result = m.find_markov_decomposition(st)
        assert isinstance(result, m.MarkovDecomposition), (trial, blocks)
        assert sorted(result.block_dims("B")) == sorted(blocks), (trial, blocks)
        assert m.verify_decomposition(st, result) < 1e-7


def test_finder_weights_match_generator():
    rng = np.random.default_rng(5)
    decomp, st = random_tripartite_instance(
        rng, 2, 2, 2, blocks=[(1, 1), (1, 1)]
    )
    result = m.find_markov_decomposition(st)
    assert isinstance(result, m.MarkovDecomposition)
    assert np.allclose(
        sorted(result.weights.tolist()), sorted(decomp.weights.tolist()), atol=1e-9
    )


def test_finder_requires_tripartite_and_small_b():
    st = m.maximally_mixed([("A", 2), ("B", 2)])
    with pytest.raises(LayoutError):
        m.find_markov_decomposition(st)


def test_finder_is_deterministic():
    rng = np.random.default_rng(6)
    _, st = random_tripartite_instance(rng, 2, 4, 2, blocks=[(1, 2), (2, 1)])
    r1 = m.find_markov_decomposition(st)
    r2 = m.find_markov_decomposition(st)
    assert isinstance(r1, m.MarkovDecomposition)
    assert np.array_equal(r1.specs["B"].isometry, r2.specs["B"].isometry)
    assert np.array_equal(r1.weights, r2.weights)


def test_finder_handles_rank_deficient_conditioner():
    rng = np.random.default_rng(7)
    rho_a = random_state(rng, [("A", 2)])
    rho_e = random_state(rng, [("E", 2)])
    pure_b = np.zeros((2, 2))
    pure_b[0, 0] = 1.0
    st = m.MultipartiteState(
        np.kron(np.kron(rho_a.matrix, pure_b), rho_e.matrix),
        [("A", 2), ("B", 2), ("E", 2)],
    )
    result = m.find_markov_decomposition(st)
    assert isinstance(result, m.MarkovDecomposition)
    assert m.verify_decomposition(st, result) < 1e-8
    assert sum(l * r for l, r in result.block_dims("B")) == 2
