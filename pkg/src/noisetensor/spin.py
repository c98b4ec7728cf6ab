"""Isotropic spin-1/2 ensemble: closed forms and a seeded sampler.

Members are ``rho(v) = (1 + v . sigma) / 2`` with ``v`` uniform on the unit
sphere.  Odd moments of ``v`` vanish and ``E[v_s v_t] = delta_st / 3``,
which fixes the low-order tensors in closed form.  The generating function
is ``exp(Tr a / 2) sinh|A| / |A|`` with ``A_s = (1/2) sum_ij sigma^s_ij a_ij``.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as tc
from .ensemble import WeightedEnsemble
from .linalg import PAULI
from .rng import Stream

SERIES_CUTOFF = 1e-6
_DERIV_SERIES_CUTOFF = 1e-3
_SERIES_TERMS = 12


def analytic_tensor(n: int) -> tc.PairTensor:
    """Exact order-``n`` tensor for ``n`` in {1, 2, 3}."""
    eye = np.eye(2, dtype=complex)
    # sum_s sigma^s (x) sigma^s as a two-pair array
    ss = np.einsum("sij,skl->ijkl", PAULI, PAULI)
    if n == 1:
        out = eye / 2
    elif n == 2:
        out = (tc.outer_array([eye, eye]) + ss / 3) / 4
    elif n == 3:
        ddd = tc.outer_array([eye, eye, eye])
        d_ss = np.multiply.outer(eye, ss)
        ss_d = np.multiply.outer(ss, eye)
        s_d_s = tc.permute_pairs(d_ss, [1, 0, 2])
        out = (ddd + (d_ss + s_d_s + ss_d) / 3) / 8
    else:
        raise ValueError("closed form only for n = 1, 2, 3; use the sampler for higher orders")
    return tc.PairTensor(out, tc.CLASSICAL)


def source_vector(a) -> np.ndarray:
    """``A_s = (1/2) sum_ij sigma^s_ij a_ij`` (complex 3-vector)."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (2, 2):
        raise ValueError("source matrix must be 2x2")
    return 0.5 * np.einsum("sij,ij->s", PAULI, a)


def sinhc_sqrt(x, deriv: int = 0):
    """``f(x) = sinh(sqrt x) / sqrt x`` and its first two x-derivatives.

    Entire in ``x``; the principal square root is used and a Taylor series
    takes over near ``x = 0``.
    """
    x = complex(x)
    cutoff = SERIES_CUTOFF if deriv == 0 else _DERIV_SERIES_CUTOFF
    if abs(x) < cutoff:
        # f = sum_k x^k / (2k+1)!
        total = 0j
        for k in range(deriv, _SERIES_TERMS):
            coef = math.factorial(k) / math.factorial(k - deriv) / math.factorial(2 * k + 1)
            total += coef * x ** (k - deriv)
        return total
    s = np.sqrt(x)
    sh, ch = np.sinh(s), np.cosh(s)
    if deriv == 0:
        return complex(sh / s)
    if deriv == 1:
        return complex((s * ch - sh) / (2 * s**3))
    if deriv == 2:
        return complex((s * s * sh - 3 * s * ch + 3 * sh) / (4 * s**5))
    raise ValueError("deriv must be 0, 1 or 2")


def analytic_generating(a) -> complex:
    """Closed-form generating function of the isotropic ensemble."""
    a = np.asarray(a, dtype=complex)
    vec = source_vector(a)
    return complex(np.exp(0.5 * np.trace(a)) * sinhc_sqrt(vec @ vec))


def sphere_vectors(n_samples: int, seed: int, stream: str = "sphere") -> np.ndarray:
    """Uniform unit 3-vectors; sample ``k`` depends only on ``(seed, k)``."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    g = Stream(seed, stream).normals(np.arange(n_samples, dtype=np.uint64), 0, count=3)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def bloch_states(v) -> np.ndarray:
    """State vectors with ``|psi><psi| = (1 + v . sigma) / 2``."""
    v = np.asarray(v, dtype=float)
    v1, v2, v3 = v[:, 0], v[:, 1], v[:, 2]
    north = v3 >= 0
    psi = np.empty((v.shape[0], 2), dtype=complex)
    # two charts avoid the 0/0 at the opposite pole
    psi[north, 0] = 1 + v3[north]
    psi[north, 1] = v1[north] + 1j * v2[north]
    south = ~north
    psi[south, 0] = v1[south] - 1j * v2[south]
    psi[south, 1] = 1 - v3[south]
    return psi / np.linalg.norm(psi, axis=1, keepdims=True)


def sample_sphere(n_samples: int, seed: int) -> WeightedEnsemble:
    """Equal-weight sample of the isotropic ensemble."""
    return WeightedEnsemble.uniform(bloch_states(sphere_vectors(n_samples, seed)))
