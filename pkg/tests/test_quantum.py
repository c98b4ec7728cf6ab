
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisetensor import quantum as qt
from noisetensor import tensor as tc
from noisetensor.linalg import (coherent_state, position_momentum, random_density,
                                random_state)

SZ = np.diag([1.0, -1.0]).astype(complex)
BELL = np.array([1, 0, 0, 1]) / np.sqrt(2)


def bell():
    return qt.BipartiteState.from_vector(BELL, 2, 2)


def bell_order2():
    d = np.eye(2)
    # 1/4 delta_{i1 j2} delta_{j1 i2}, axes (i1, j1, i2, j2)
    return 0.25 * np.einsum("ad,bc->abcd", d, d)


def random_pure(rng, de, ds):
    return qt.BipartiteState.from_vector(random_state(rng, de * ds), de, ds)


def test_product_state_blocks():
    rng = np.random.default_rng(0)
    re, rs = random_density(rng, 3), random_density(rng, 2)
    s = qt.BipartiteState.product(re, rs)
    for i in range(2):
        for j in range(2):
            np.testing.assert_allclose(qt.system_block(s, i, j), rs[i, j] * re, atol=1e-14)


def test_bell_blocks_and_hermiticity():
    s = bell()
    for i in range(2):
        for j in range(2):
            expect = np.zeros((2, 2))
            expect[i, j] = 0.5
            np.testing.assert_allclose(qt.system_block(s, i, j), expect, atol=1e-15)
    rng = np.random.default_rng(1)
    r = random_pure(rng, 3, 3)
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(qt.system_block(r, j, i),
                                       qt.system_block(r, i, j).conj().T, atol=1e-15)
    total = sum(qt.system_block(r, i, i) for i in range(3))
    np.testing.assert_allclose(total, r.env_marginal(), atol=1e-15)


def test_block_index_out_of_range():
    with pytest.raises(IndexError):
        qt.system_block(bell(), 2, 0)


def test_bell_trace_tensors():
    s = bell()
    np.testing.assert_allclose(qt.trace_tensor(s, 1).entries, 0.5 * np.eye(2), atol=1e-15)
    np.testing.assert_allclose(qt.trace_tensor(s, 2).entries, bell_order2(), atol=1e-15)


def test_pure_product_gives_outer_power():
    rng = np.random.default_rng(2)
    psi_e, psi_s = random_state(rng, 3), random_state(rng, 2)
    s = qt.BipartiteState.from_vector(np.kron(psi_e, psi_s), 3, 2)
    rs = np.outer(psi_s, psi_s.conj())
    for n in (1, 2, 3):
        np.testing.assert_allclose(qt.trace_tensor(s, n).entries, tc.outer_array([rs] * n),
                                   atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), de=st.integers(1, 4), ds=st.integers(1, 4),
       n=st.integers(2, 3))
def test_adjacent_descent_and_cyclic_symmetry(seed, de, ds, n):
    s = random_pure(np.random.default_rng(seed), de, ds)
    t = qt.trace_tensor(s, n)
    lower = qt.trace_tensor(s, n - 1).entries
    assert tc.symmetry_defect(t) <= 1e-12
    # the wrap-around pair (n, 1) lands in slot 1, which cyclic symmetry maps
    # onto the same lower tensor
    for a in range(1, n + 1):
        merged = tc.contract_chain(t, a, a % n + 1).entries
        np.testing.assert_allclose(merged, lower, atol=1e-12)


def test_entangled_state_is_not_fully_symmetric():
    rng = np.random.default_rng(3)
    s = random_pure(rng, 3, 2)
    assert tc.full_permutation_defect(qt.trace_tensor(s, 3)) > 1e-3


def test_order3_split_reconstructs():
    rng = np.random.default_rng(4)
    t = qt.trace_tensor(random_pure(rng, 3, 3), 3)
    sym, anti = tc.symmetric_antisymmetric_split(t)
    assert tc.full_permutation_defect(sym) <= 1e-12
    np.testing.assert_allclose(sym.entries + anti.entries, t.entries, atol=1e-12)
    swapped = tc.permute_pairs(anti.entries, [1, 0, 2])
    np.testing.assert_allclose(swapped, -anti.entries, atol=1e-12)


def test_trace_contraction_is_not_descent():
    t = qt.trace_tensor(bell(), 2)
    traced = tc.contract_trace(t, 2).entries
    rho1 = qt.trace_tensor(bell(), 1).entries
    # Tr_E rho_E rho_{ij} = delta_ij / 4, half the reduced state
    np.testing.assert_allclose(traced, 0.25 * np.eye(2), atol=1e-15)
    assert tc.max_abs(traced - rho1) > 0.2


def test_family_single_member_and_linearity():
    rng = np.random.default_rng(5)
    s = random_pure(rng, 2, 3)
    f = qt.WeightedStateFamily([1.0], [s])
    np.testing.assert_allclose(qt.mixed_trace_tensor(f, 2).entries,
                               qt.trace_tensor(s, 2).entries, atol=1e-15)
    e0 = np.array([1, 0])
    p = qt.BipartiteState.from_vector(np.kron(e0, [1, 0]), 2, 2)
    q = qt.BipartiteState.from_vector(np.kron(e0, [0, 1]), 2, 2)
    g = qt.WeightedStateFamily([0.5, 0.5], [p, q])
    np.testing.assert_allclose(qt.mixed_trace_tensor(g, 1).entries, 0.5 * np.eye(2), atol=1e-15)
    np.testing.assert_allclose(qt.classical_variant(g, 2).entries,
                               qt.mixed_trace_tensor(g, 2).entries, atol=1e-15)


def test_bell_family_vs_classical_variant():
    f = qt.WeightedStateFamily([1.0], [bell()])
    quantum2 = qt.mixed_trace_tensor(f, 2).entries
    classical2 = qt.classical_variant(f, 2).entries
    np.testing.assert_allclose(classical2, tc.outer_array([0.5 * np.eye(2)] * 2), atol=1e-15)
    np.testing.assert_allclose(quantum2, bell_order2(), atol=1e-15)
    assert tc.max_abs(quantum2 - classical2) > 0.2
    assert tc.full_permutation_defect(qt.classical_variant(f, 3)) <= 1e-15
    np.testing.assert_allclose(qt.classical_variant(f, 1).entries,
                               qt.mixed_trace_tensor(f, 1).entries, atol=1e-15)


def test_family_validation():
    with pytest.raises(ValueError):
        qt.WeightedStateFamily([], [])
    with pytest.raises(ValueError):
        qt.WeightedStateFamily([0.6, 0.6], [bell(), bell()])
    with pytest.raises(ValueError):
        qt.WeightedStateFamily([0.5, 0.5], [bell(), qt.BipartiteState.from_vector([1, 0], 1, 2)])


def test_state_validation():
    with pytest.raises(ValueError):
        qt.BipartiteState(2, 1, np.diag([0.7, 0.7]))
    with pytest.raises(ValueError):
        qt.BipartiteState(2, 1, np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        qt.BipartiteState(2, 1, np.diag([0.5, 0.5]), pure=True)


def test_fluctuation_examples():
    assert qt.environment_fluctuation(bell(), SZ) == pytest.approx(0.25, abs=1e-14)
    rng = np.random.default_rng(6)
    prod = qt.BipartiteState.from_vector(np.kron(random_state(rng, 3), random_state(rng, 2)), 3, 2)
    a = np.array([[0.3, 1 - 0.2j], [1 + 0.2j, -0.7]])
    assert abs(qt.environment_fluctuation(prod, a)) <= 1e-12


def test_fluctuation_two_ways_on_random_states():
    rng = np.random.default_rng(7)
    for _ in range(50):
        de, ds = rng.integers(1, 4, size=2)
        s = random_pure(rng, int(de), int(ds))
        h = rng.normal(size=(ds, ds)) + 1j * rng.normal(size=(ds, ds))
        a = h + h.conj().T
        direct = qt.environment_fluctuation(s, a)
        assert direct >= -1e-10
        assert abs(direct - qt.fluctuation_from_tensors(s, a)) <= 1e-10


def test_fluctuation_warns_for_mixed_input():
    s = qt.BipartiteState(2, 2, np.eye(4) / 4)
    with pytest.warns(RuntimeWarning):
        val = qt.environment_fluctuation(s, SZ)
    assert np.isfinite(val)


def test_conserved_pointer_has_zero_rate():
    s = bell()
    assert qt.pointer_variance_rate(s, SZ, np.zeros((2, 2)), np.zeros((4, 4)), SZ) == 0.0


def test_coherent_pointer_rate():
    dim, mass = 20, 1.0
    x, p = position_momentum(dim, mass)
    psi = coherent_state(dim, 0.8 + 0.5j)
    s = qt.BipartiteState.from_vector(psi, 1, dim)
    rate = qt.pointer_variance_rate(s, p @ p / (2 * mass), np.zeros((1, 1)),
                                    np.zeros((dim, dim)), x)
    assert abs(rate) <= 1e-6
    assert abs(qt.anticommutator_rate(s, x, p, mass)) <= 1e-6


def test_pointer_rate_matches_exact_evolution():
    rng = np.random.default_rng(8)
    de, ds = 2, 3
    a = np.diag([1.0, 1.0, -0.5]).astype(complex)
    hs = rng.normal(size=(ds, ds)) + 1j * rng.normal(size=(ds, ds))
    hs = hs + hs.conj().T
    he = np.diag([0.2, -0.4]).astype(complex)
    hi = qt.pointer_admissible_interaction(rng, de, a)
    s = random_pure(rng, de, ds)
    rate = qt.pointer_variance_rate(s, hs, he, hi, a)
    dt = 1e-5
    fd = (qt.exact_variance(s, hs, he, hi, a, dt) - qt.exact_variance(s, hs, he, hi, a, -dt)) / (2 * dt)
    assert abs(rate - fd) <= 1e-6


def test_pointer_precondition():
    s = bell()
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    with pytest.raises(ValueError):
        qt.pointer_variance_rate(s, SZ, np.zeros((2, 2)), np.kron(sx, sx), SZ)


def test_oscillator_rate_identity_and_bound():
    dim, mass = 20, 2.0
    x, p = position_momentum(dim, mass)
    rng = np.random.default_rng(9)
    amp = np.zeros(dim, dtype=complex)
    amp[:6] = rng.normal(size=6) + 1j * rng.normal(size=6)
    s = qt.BipartiteState.from_vector(amp, 1, dim)
    rate = qt.pointer_variance_rate(s, p @ p / (2 * mass), np.zeros((1, 1)),
                                    np.zeros((dim, dim)), x)
    assert rate == pytest.approx(qt.anticommutator_rate(s, x, p, mass), abs=1e-10)
    assert abs(rate) <= qt.schwarz_bound(s, x, p, mass) + 1e-12


def test_json_roundtrip():
    s = bell()
    back = qt.BipartiteState.from_json(s.to_json())
    np.testing.assert_allclose(back.rho, s.rho, atol=0)
    assert back.pure
