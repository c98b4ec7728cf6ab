import itertools
import math

import numpy as np
import pytest

from noisetensor import tensor as tc
from noisetensor.ensemble import WeightedEnsemble, generating_function
from noisetensor.spin import (analytic_generating, analytic_tensor, bloch_states, sample_sphere,
                              sinhc_sqrt, source_vector, sphere_vectors)
from noisetensor.linalg import PAULI


def _haar_moment(n, d=2):
    """Symmetric-projector formula for the isotropic pure-state average."""
    out = np.zeros((d,) * (2 * n), dtype=complex)
    eye = np.eye(d)
    for perm in itertools.permutations(range(n)):
        term = np.ones((d,) * (2 * n))
        for l in range(n):
            shape = [1] * (2 * n)
            shape[2 * l] = d
            shape[2 * perm[l] + 1] = d
            # delta(i_l, j_perm(l)); eye is symmetric so axis order is irrelevant
            term = term * eye.reshape(shape)
        out += term
    return out / math.prod(range(d, d + n))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_closed_form_matches_symmetric_projector(n):
    np.testing.assert_allclose(analytic_tensor(n).entries, _haar_moment(n), atol=1e-15)


def test_closed_form_descent():
    for n in (2, 3):
        t, lo = analytic_tensor(n), analytic_tensor(n - 1).entries
        for s in range(1, n + 1):
            assert tc.max_abs(tc.contract_trace(t, s).entries - lo) < 1e-15
            assert tc.max_abs(tc.contract_chain(t, s, s % n + 1).entries - lo) < 1e-15


def test_bloch_states_reproduce_vectors():
    v = sphere_vectors(1000, 4)
    psi = bloch_states(v)
    rho = np.einsum("mi,mj->mij", psi, psi.conj())
    back = np.einsum("sij,mji->ms", PAULI, rho).real
    np.testing.assert_allclose(back, v, atol=1e-14)
    poles = bloch_states(np.array([[0, 0, 1.0], [0, 0, -1.0]]))
    assert np.all(np.isfinite(poles))


@pytest.mark.parametrize("deriv", [0, 1, 2])
def test_sinhc_series_joins_closed_form(deriv):
    h = 1e-6
    for x0 in (1e-3, 1e-6, 0.5, -2.0, 3.0 + 1.0j):
        if deriv < 2:
            fd = (sinhc_sqrt(x0 + h, deriv) - sinhc_sqrt(x0 - h, deriv)) / (2 * h)
            assert abs(fd - sinhc_sqrt(x0, deriv + 1)) < 1e-5
    for x in (0.9e-6, 1.1e-6, 0.9e-3, 1.1e-3):
        assert abs(sinhc_sqrt(x, deriv) - sinhc_sqrt(x * (1 + 1e-9), deriv)) < 1e-8


def _sphere_quadrature(f, n=48):
    x, w = np.polynomial.legendre.leggauss(n)
    phi = 2 * np.pi * np.arange(2 * n) / (2 * n)
    st = np.sqrt(1 - x**2)
    v = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                  np.outer(x, np.ones_like(phi))], axis=-1).reshape(-1, 3)
    wt = np.outer(w, np.full(2 * n, 1 / (2 * n))).reshape(-1) / 2
    return np.sum(wt * f(v))


def test_generating_function_against_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = 0.7 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))

        def integrand(v):
            rho = 0.5 * (np.eye(2) + np.einsum("ms,sij->mij", v, PAULI))
            return np.exp(np.einsum("mij,ij->m", rho, a))

        assert abs(analytic_generating(a) - _sphere_quadrature(integrand)) < 1e-12


def test_generating_function_zero_source_vector():
    a = np.eye(2) * 0.3
    assert np.allclose(source_vector(a), 0)
    assert abs(analytic_generating(a) - np.exp(0.3)) < 1e-15


def test_sample_generating_close_to_closed_form():
    ens = sample_sphere(20000, 9)
    assert isinstance(ens, WeightedEnsemble)
    a = np.array([[0.2, 0.5j], [-0.1, 0.4]])
    assert abs(generating_function(ens, a) - analytic_generating(a)) < 0.02
