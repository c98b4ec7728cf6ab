import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from noisetensor import collisional as cl
from noisetensor import tensor as tc

# scipy radial integral at N = m = k_th = |f|^2 = 1, |R| = 1
F_AT_ONE = 13.636177384518772
GRID = np.linspace(-1.0, 1.0, 5)


def radial_reference(radius, k_th=1.0, mass=1.0):
    """Independent oracle for a Gaussian bath with |f|^2 = 1 and N = 1: both
    direction integrals done by hand leave
    int 4 pi k^2 mu(k) (k / m) 4 pi (1 - sinc^2(k R)) dk."""
    norm = (2 * np.pi * k_th**2) ** -1.5

    def integrand(k):
        s = np.sinc(k * radius / np.pi)
        return (4 * np.pi * k**2 * norm * np.exp(-k * k / (2 * k_th**2)) * (k / mass)
                * 4 * np.pi * (1 - s * s))

    return quad(integrand, 0, 12 * k_th, limit=400, epsabs=1e-13, epsrel=1e-12)[0]


def bath(k_th=1.0, f2=1.0):
    return cl.Scatterer(1.0, 1.0, cl.gaussian_mu(k_th), f2)


def test_sphere_rule_weights():
    dirs, w = cl.sphere_rule(8, 8)
    assert w.sum() == pytest.approx(4 * np.pi, rel=1e-14)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-14)


def test_kernel_matches_frozen_reference():
    assert radial_reference(1.0) == pytest.approx(F_AT_ONE, rel=1e-10)
    val = cl.collisional_kernel(bath(), [1.0])[0]
    assert val.real == pytest.approx(F_AT_ONE, rel=1e-8)
    assert abs(val.imag) <= 1e-12


def test_kernel_direction_independent_for_isotropic_bath():
    pts = np.array([[1.0, 0, 0], [0, 1.0, 0], [0.6, 0, 0.8]])
    vals = cl.collisional_kernel(bath(), pts)
    np.testing.assert_allclose(vals, vals[0], rtol=1e-8)


def test_kernel_vanishes_at_origin():
    assert cl.collisional_kernel(bath(), [0.0])[0] == 0


def test_quadrature_doubling():
    q = cl.Quadrature(48, 24, 24)
    a = cl.collisional_kernel(bath(), GRID, q)
    b = cl.collisional_kernel(bath(), GRID, q.doubled())
    nz = np.abs(b) > 0
    assert np.max(np.abs(a[nz] - b[nz]) / np.abs(b[nz])) < 1e-6


def test_plateau_approach():
    p = cl.plateau(1, 1, 1, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for r in (10.0, 20.0, 40.0):
            dev = radial_reference(r) / p - 1
            # E[1/k] / (2 R^2 E[k]) = 1 / (4 R^2) for a Maxwell bath with k_th = 1
            assert r * r * dev == pytest.approx(-0.25, abs=5e-3)
    near = cl.collisional_kernel(bath(), [10.0], cl.Quadrature().doubled())[0].real
    assert near / p - 1 == pytest.approx(-0.25 / 100, abs=5e-5)


def test_callable_amplitude_matches_constant():
    q = cl.Quadrature(16, 8, 8)
    const = cl.collisional_kernel(bath(f2=0.7), [0.5, 1.0], q)
    func = cl.collisional_kernel(bath(f2=lambda ko, ki: np.full(ko.shape[:-1], 0.7)), [0.5, 1.0], q)
    np.testing.assert_allclose(func, const, rtol=1e-12)


def test_real_part_nonnegative_with_anisotropic_amplitude():
    f2 = lambda ko, ki: 1 + 0.5 * np.sum(ko * ki, axis=-1) / (  # noqa: E731
        np.linalg.norm(ko, axis=-1) * np.linalg.norm(ki, axis=-1) + 1e-300)
    vals = cl.collisional_kernel(bath(f2=f2), GRID, cl.Quadrature(16, 8, 8))
    assert np.all(vals.real >= -1e-12)


def test_unnormalized_mu_rejected():
    s = cl.Scatterer(1.0, 1.0, lambda k: 2 * cl.gaussian_mu(1.0)(k))
    with pytest.raises(ValueError):
        cl.collisional_kernel(s, [1.0])


def test_kernel_table_layout():
    table = cl.kernel_table(bath(), GRID, cl.Quadrature(16, 8, 8))
    diffs = (GRID[:, None] - GRID[None, :]).reshape(-1)
    direct = cl.collisional_kernel(bath(), diffs, cl.Quadrature(16, 8, 8)).reshape(5, 5)
    np.testing.assert_allclose(table, direct, rtol=1e-12)
    np.testing.assert_array_equal(np.diag(table), 0)


def table5():
    return cl.kernel_table(bath(), GRID, cl.Quadrature(16, 8, 8))


def random_tensor(rng, n):
    return tc.PairTensor(rng.normal(size=(5,) * (2 * n)) + 1j * rng.normal(size=(5,) * (2 * n)))


def test_order1_decay():
    rng = np.random.default_rng(0)
    table = table5()
    rho0 = tc.PairTensor(rng.normal(size=(5, 5)) + 0j)
    t = 0.3
    out = cl.collisional_evolve(rho0, table, t).entries
    np.testing.assert_array_equal(np.diag(out), np.diag(rho0.entries))
    np.testing.assert_allclose(np.abs(out), np.exp(-table.real * t) * np.abs(rho0.entries),
                               rtol=1e-13)


@pytest.mark.parametrize("n", [2, 3])
def test_descent(n):
    rng = np.random.default_rng(n)
    table = table5()
    rho0 = random_tensor(rng, n)
    t = 0.7
    high = cl.collisional_evolve(rho0, table, t)
    low = cl.collisional_evolve(tc.contract_chain(rho0, 1, 2), table, t)
    assert tc.max_abs(tc.contract_chain(high, 1, 2).entries - low.entries) <= 1e-12


def test_order2_pair_swap():
    e = cl.evolution_exponent(table5(), 2)
    np.testing.assert_allclose(tc.permute_pairs(e, [1, 0]), e, rtol=1e-14, atol=0)


def test_order3_split():
    table = table5()
    fs, fa = cl.symmetric_antisymmetric_exponent(table)
    e = cl.evolution_exponent(table, 3)
    scale = np.max(np.abs(e))
    np.testing.assert_allclose(fs + fa, e, atol=1e-14 * scale)
    for perm in ([1, 0, 2], [0, 2, 1], [2, 1, 0]):
        np.testing.assert_allclose(tc.permute_pairs(fs, perm), fs, atol=1e-14 * scale)
        np.testing.assert_allclose(tc.permute_pairs(fa, perm), -fa, atol=1e-14 * scale)


def test_grid_mismatch():
    with pytest.raises(ValueError):
        cl.collisional_evolve(tc.PairTensor(np.eye(4)), table5(), 1.0)
