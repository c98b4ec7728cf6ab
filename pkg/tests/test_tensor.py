import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisetensor import tensor as tc
from noisetensor.linalg import random_density, random_hermitian, random_state

seeds = st.integers(0, 2**32 - 1)


def _pure(rng, d):
    psi = random_state(rng, d)
    return np.outer(psi, psi.conj())


def test_trace_contraction_explicit():
    rng = np.random.default_rng(0)
    t = tc.PairTensor(rng.normal(size=(2,) * 6) + 0j)
    got = tc.contract_trace(t, 2).entries
    np.testing.assert_allclose(got, np.einsum("abccef->abef", t.entries))


def test_chain_contraction_explicit():
    rng = np.random.default_rng(1)
    t = tc.PairTensor(rng.normal(size=(3,) * 6) + 1j * rng.normal(size=(3,) * 6))
    np.testing.assert_allclose(tc.contract_chain(t, 1, 2).entries,
                               np.einsum("ajjdef->adef", t.entries))
    # merged pair lands at the smaller slot index
    np.testing.assert_allclose(tc.contract_chain(t, 3, 1).entries,
                               np.einsum("jbcdaj->abcd", t.entries).transpose(0, 1, 2, 3))


def test_quantum_flavor_only_adjacent():
    rho = random_density(np.random.default_rng(2), 2)
    t = tc.power(rho, 3, tc.QUANTUM)
    tc.contract_chain(t, 3, 1)
    with pytest.raises(ValueError):
        tc.contract_chain(t, 1, 3)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 3), st.integers(2, 3))
def test_power_of_pure_state_descends(seed, d, n):
    rho = _pure(np.random.default_rng(seed), d)
    t = tc.power(rho, n)
    lo = tc.power(rho, n - 1).entries
    for s in range(1, n + 1):
        np.testing.assert_allclose(tc.contract_trace(t, s).entries, lo, atol=1e-12)
        np.testing.assert_allclose(tc.contract_chain(t, s, s % n + 1).entries, lo, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_contract_operators_matches_traces(seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_density(rng, 3), random_density(rng, 3)
    a, b = random_hermitian(rng, 3), random_hermitian(rng, 3)
    t = tc.outer([r1, r2])
    want = np.trace(r1 @ a) * np.trace(r2 @ b)
    assert abs(tc.contract_operators(t, [a, b]) - want) < 1e-12
    assert abs(tc.contract_operators(t, [None, b]) - np.trace(r2 @ b)) < 1e-12


def test_symmetrize_and_defects():
    rng = np.random.default_rng(3)
    r1, r2 = random_density(rng, 2), random_density(rng, 2)
    t = tc.outer([r1, r2])
    assert tc.symmetry_defect(t) > 1e-3
    s = tc.PairTensor(tc.symmetrize(t))
    assert tc.symmetry_defect(s) < 1e-14
    assert tc.hermiticity_defect(s) < 1e-14


def test_symmetric_antisymmetric_split_sums_back():
    rng = np.random.default_rng(4)
    raw = tc.outer_array([random_density(rng, 2) for _ in range(3)])
    cyc = (raw + tc.permute_pairs(raw, (1, 2, 0)) + tc.permute_pairs(raw, (2, 0, 1))) / 3
    t = tc.PairTensor(cyc, tc.QUANTUM)
    sym, anti = tc.symmetric_antisymmetric_split(t)
    np.testing.assert_allclose(sym.entries + anti.entries, t.entries, atol=1e-14)


def test_json_round_trip():
    rng = np.random.default_rng(5)
    t = tc.outer([random_density(rng, 2), random_density(rng, 2)], tc.QUANTUM)
    back = tc.from_json(tc.to_json(t))
    assert back.flavor == tc.QUANTUM
    np.testing.assert_array_equal(back.entries, t.entries)


def test_budget(monkeypatch):
    monkeypatch.setenv("NOISETENSOR_BUDGET_MB", "1")
    with pytest.raises(tc.BudgetExceeded):
        tc.check_budget(8, 4)
    tc.check_budget(2, 3)
