import numpy as np
import pytest

import markovia as m
from markovia.errors import InvariantError, LayoutError

from helpers import random_density, random_state, random_unitary


def random_channel(rng, d_in, d_out, n_kraus):
    """Random trace-preserving CP map via a Haar isometry."""
    g = rng.standard_normal((d_out * n_kraus, d_in)) + 1j * rng.standard_normal(
        (d_out * n_kraus, d_in)
    )
    q, _ = np.linalg.qr(g)
    return [q[i * d_out : (i + 1) * d_out, :] for i in range(n_kraus)]


def test_channel_validation():
    with pytest.raises(InvariantError):
        m.KrausChannel([np.eye(2) * 2], [("B", 2)], [("B", 2)])
    with pytest.raises(LayoutError):
        m.KrausChannel([np.eye(3)], [("B", 2)], [("B", 2)])
    ch = m.identity_channel([("B", 2)])
    assert m.is_completely_positive(ch)
    assert np.linalg.eigvalsh(m.choi_matrix(ch))[0] > -1e-9


def test_identity_channel_apply():
    rng = np.random.default_rng(0)
    st = random_state(rng, [("A", 2), ("B", 2)])
    out = m.apply(m.identity_channel([("B", 2)]), st, ["B"])
    assert np.max(np.abs(out.matrix - st.matrix)) < 1e-14
    assert out.labels == st.labels


def test_ad_unitary_basics():
    st = m.pure_state([1, 0], [("B", 2)])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = m.apply(m.ad_unitary(sx), st, ["B"])
    assert abs(out.matrix[1, 1] - 1.0) < 1e-14
    with pytest.raises(InvariantError):
        m.ad_unitary(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_ad_unitary_composition():
    rng = np.random.default_rng(1)
    for _ in range(10):
        u, v = random_unitary(rng, 3), random_unitary(rng, 3)
        st = random_state(rng, [("B", 3)])
        via_compose = m.apply(
            m.compose(m.ad_unitary(u, [("B", 3)]), m.ad_unitary(v, [("B", 3)])),
            st,
            ["B"],
        )
        direct = m.apply(m.ad_unitary(u @ v, [("B", 3)]), st, ["B"])
        assert m.one_norm_distance(via_compose, direct) < 1e-10


def test_apply_joint_unitary_on_pair():
    rng = np.random.default_rng(2)
    st = random_state(rng, [("A", 2), ("B", 2), ("E", 2)])
    u = random_unitary(rng, 4)
    out = m.apply(m.ad_unitary(u, [("B", 2), ("E", 2)]), st, ["B", "E"])
    big = np.kron(np.eye(2), u)
    assert np.max(np.abs(out.matrix - big @ st.matrix @ big.conj().T)) < 1e-12


def test_depolarizing_on_bell():
    out = m.apply(m.depolarizing_channel([("B", 2)]), m.bell_state(), ["B"])
    assert np.max(np.abs(out.matrix - np.eye(4) / 4)) < 1e-12


def test_compose_matches_sequential_apply():
    rng = np.random.default_rng(3)
    lay = [("B", 2)]
    f_ops = random_channel(rng, 2, 2, 3)
    g_ops = random_channel(rng, 2, 2, 2)
    f = m.KrausChannel(f_ops, lay, lay)
    g = m.KrausChannel(g_ops, lay, lay)
    fg = m.compose(f, g)
    assert len(fg.kraus_ops) <= len(f.kraus_ops) * len(g.kraus_ops)
    for _ in range(50):
        st = random_state(rng, lay)
        seq = m.apply(f, m.apply(g, st, ["B"]), ["B"])
        one = m.apply(fg, st, ["B"])
        assert m.one_norm_distance(seq, one) < 1e-10


def test_compose_layout_mismatch():
    f = m.identity_channel([("B", 2)])
    g = m.identity_channel([("B", 3)])
    with pytest.raises(LayoutError):
        m.compose(f, g)


def test_trace_out_channel_matches_partial_trace():
    rng = np.random.default_rng(4)
    lay = [("A", 2), ("B", 2), ("E", 3)]
    tc = m.trace_out_channel(lay, ["E"])
    for _ in range(20):
        st = random_state(rng, lay)
        via_channel = m.apply(tc, st, ["A", "B", "E"])
        direct = m.partial_trace(st, ["A", "B"])
        assert m.one_norm_distance(via_channel, direct) < 1e-12
    tc_mid = m.trace_out_channel(lay, ["B"])
    st = random_state(rng, lay)
    assert (
        m.one_norm_distance(
            m.apply(tc_mid, st, ["A", "B", "E"]), m.partial_trace(st, ["A", "E"])
        )
        < 1e-12
    )


def test_append_state_channel():
    rng = np.random.default_rng(5)
    sigma = random_state(rng, [("E", 2)])
    lam = m.append_state_channel([("B", 2)], sigma)
    st = random_state(rng, [("A", 2), ("B", 2)])
    out = m.apply(lam, st, ["B"])
    assert out.labels == ("A", "B", "E")
    assert np.max(np.abs(out.matrix - np.kron(st.matrix, sigma.matrix))) < 1e-12


def test_direct_sum_channel_single_trivial_block():
    rng = np.random.default_rng(6)
    sigma = random_state(rng, [("E", 2)])
    spec = m.BlockSpec.trivial(3)
    append = m.append_state_channel([("B", 1)], sigma)
    # reshape: a (3,1)-block channel acting trivially on the left factor
    block = m.KrausChannel(
        [k for k in append.kraus_ops], [("B", 1)], [("B", 1), ("E", 2)]
    )
    lam = m.direct_sum_channel(spec, [block], label="B")
    st = random_state(rng, [("B", 3)])
    out = m.apply(lam, st, ["B"])
    assert np.max(np.abs(out.matrix - np.kron(st.matrix, sigma.matrix))) < 1e-12


def test_direct_sum_channel_recovers_markov_state(tripartite_fixture=None):
    rng = np.random.default_rng(7)
    from helpers import random_tripartite_instance

    decomp, state = random_tripartite_instance(rng, 2, 4, 2, blocks=[(1, 2), (2, 1)])
    lam = m.recovery_channels(decomp)["B"]
    rho_ab = m.partial_trace(state, ["A", "B"])
    rebuilt = m.apply(lam, rho_ab, ["B"])
    assert m.one_norm_distance(rebuilt, state) < 1e-10
    phi = m.phi_channels(decomp)["B"]
    rho_b = m.partial_trace(state, ["B"])
    fixed = m.apply(phi, rho_b, ["B"])
    assert m.one_norm_distance(fixed, rho_b) < 1e-9
    # tracing the environment out of the recovery gives the same subsystem map
    via_trace = m.compose(m.trace_out_channel(lam.out_layout, ["E"]), lam)
    st = random_state(rng, [("B", 4)])
    assert (
        m.one_norm_distance(
            m.apply(via_trace, st, ["B"]), m.apply(phi, st, ["B"])
        )
        < 1e-10
    )


def test_stinespring_identity_and_unitary():
    dil = m.stinespring(m.identity_channel([("B", 2)]))
    assert dil.anc_c_dim == 1 and dil.anc_env_dim == 1
    assert np.allclose(dil.unitary, np.eye(2))
    rng = np.random.default_rng(8)
    u = random_unitary(rng, 3)
    dil_u = m.stinespring(m.ad_unitary(u, [("B", 3)]))
    assert np.allclose(dil_u.unitary, u)


def test_stinespring_random_enlarging_channel():
    rng = np.random.default_rng(9)
    ops = random_channel(rng, 2, 4, 3)
    ch = m.KrausChannel(ops, [("B", 2)], [("B", 2), ("E", 2)])
    dil = m.stinespring(ch)
    assert dil.anc_c_dim <= len(ch.kraus_ops)
    worst = 0.0
    for i in range(2):
        for j in range(2):
            basis = np.zeros((2, 2), dtype=complex)
            basis[i, j] = 1.0
            worst = max(worst, np.max(np.abs(dil.act(basis) - ch.act(basis))))
    assert worst < 1e-9


def test_stinespring_round_trip_on_square_channels():
    rng = np.random.default_rng(10)
    for n_kraus in (1, 2, 4):
        ops = random_channel(rng, 3, 3, n_kraus)
        ch = m.KrausChannel(ops, [("B", 3)], [("B", 3)])
        dil = m.stinespring(ch)
        for _ in range(5):
            x = random_density(rng, 3)
            assert np.max(np.abs(dil.act(x) - ch.act(x))) < 1e-9


def test_stinespring_rejects_nondivisible():
    ops = [np.ones((3, 2)) / np.sqrt(3)]
    g = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 2)))[0]
    ch = m.KrausChannel([g], [("B", 2)], [("C", 3)])
    with pytest.raises(LayoutError):
        m.stinespring(ch)


def test_reduce_localized_dynamics_identity():
    rng = np.random.default_rng(11)
    sigma = random_state(rng, [("E", 2)])
    lam = m.append_state_channel([("B", 2)], sigma)
    f = m.identity_channel([("B", 2), ("E", 2)])
    eb = m.reduce_localized_dynamics({"B": lam}, {"B": f})["B"]
    for _ in range(5):
        st = random_state(rng, [("B", 2)])
        assert m.one_norm_distance(m.apply(eb, st, ["B"]), st) < 1e-10


def test_reduce_localized_dynamics_matches_joint_evolution():
    rng = np.random.default_rng(12)
    sigma = random_state(rng, [("E", 2)])
    lam = m.append_state_channel([("B", 2)], sigma)
    for _ in range(20):
        u = random_unitary(rng, 4)
        f = m.ad_unitary(u, [("B", 2), ("E", 2)])
        eb = m.reduce_localized_dynamics({"B": lam}, {"B": f})["B"]
        rho_ab = random_state(rng, [("A", 2), ("B", 2)])
        joint = m.apply(lam, rho_ab, ["B"])
        evolved = m.apply(f, joint, ["B", "E"])
        lhs = m.partial_trace(evolved, ["A", "B"])
        rhs = m.apply(eb, rho_ab, ["B"])
        assert m.one_norm_distance(lhs, rhs) < 1e-9


def test_localized_dynamics_never_increases_negativity_from_markov():
    rng = np.random.default_rng(13)
    from helpers import random_tripartite_instance

    for _ in range(10):
        decomp, state = random_tripartite_instance(rng, 2, 2, 2)
        rho_ab = m.partial_trace(state, ["A", "B"])
        base = m.negativity(rho_ab, ["A"])
        u = random_unitary(rng, 4)
        f = m.ad_unitary(u, [("B", 2), ("E", 2)])
        out = m.partial_trace(m.apply(f, state, ["B", "E"]), ["A", "B"])
        assert m.negativity(out, ["A"]) <= base + 1e-9
