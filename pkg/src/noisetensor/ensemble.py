"""Classical-noise density tensors from weighted pure-state ensembles.

An ensemble ``{w_a, psi_a}`` defines, for every order ``n``, the tensor

    rho^(n)_{i1 j1, ..., in jn} = sum_a w_a prod_l (psi_a)_{i_l} (psi_a)*_{j_l}

together with the generating function ``G[a] = sum_a w_a exp(rho_a . a)``
where ``rho . a = sum_ij rho_ij a_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .linalg import require_hermitian, vector_from_json, vector_to_json

WEIGHT_TOL = 1e-9
NORM_TOL = 1e-9
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """Finite ensemble of weighted pure states.

    Parameters
    ----------
    weights : array_like, shape (M,)
        Nonnegative weights.  Weights summing to 1 within ``1e-9`` are
        renormalized; anything else is rejected.
    states : array_like, shape (M, d)
        Normalized state vectors, one per row.  Norms within ``1e-9`` of one
        are renormalized.
    """

    weights: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        psi = np.asarray(self.states, dtype=complex)
        if psi.ndim != 2:
            raise ValueError("states must have shape (members, dim)")
        if w.size == 0:
            raise ValueError("ensemble is empty")
        if psi.shape[0] != w.size:
            raise ValueError(f"{w.size} weights for {psi.shape[0]} states")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        norms = np.linalg.norm(psi, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            k = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"member {k} has norm {norms[k]!r}")
        w = w / total
        psi = psi / norms[:, None]
        w.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", psi)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.weights.size

    @classmethod
    def uniform(cls, states) -> "WeightedEnsemble":
        states = np.asarray(states, dtype=complex)
        return cls(np.full(states.shape[0], 1.0 / states.shape[0]), states)

    def to_json(self) -> dict:
        return {"dim": self.dim,
                "members": [{"w": float(w), "psi": vector_to_json(p)}
                            for w, p in zip(self.weights, self.states)]}

    @classmethod
    def from_json(cls, obj: dict) -> "WeightedEnsemble":
        members = obj["members"]
        w = [float(m["w"]) for m in members]
        psi = np.array([vector_from_json(m["psi"], "psi") for m in members])
        if psi.ndim != 2 or psi.shape[1] != int(obj["dim"]):
            raise ValueError(f"members do not match dim={obj['dim']}")
        return cls(w, psi)


def _member_products(states, n: int) -> np.ndarray:
    """Per-member flattened ``rho_a^{(x) n}``, shape (M, d**(2n))."""
    m, d = states.shape
    rho = (states[:, :, None] * np.conj(states[:, None, :])).reshape(m, d * d)
    out = rho
    for _ in range(n - 1):
        out = (out[:, :, None] * rho[:, None, :]).reshape(m, -1)
    return out


def density_tensor(ens: WeightedEnsemble, n: int) -> tc.PairTensor:
    """Order-``n`` classical density tensor of the ensemble."""
    if n < 1:
        raise ValueError("order must be >= 1")
    d = ens.dim
    tc.check_budget(d, n, extra_factor=1 + _CHUNK)
    acc = np.zeros(d ** (2 * n), dtype=complex)
    # fixed chunk order keeps the sum bit-stable for a given member ordering
    for k0 in range(0, len(ens), _CHUNK):
        sl = slice(k0, k0 + _CHUNK)
        acc += ens.weights[sl] @ _member_products(ens.states[sl], n)
    return tc.PairTensor(acc.reshape((d,) * (2 * n)), tc.CLASSICAL)


def density_tensor_batches(states, n: int, n_batches: int = 100):
    """Equal-weight sample tensor with batch-means standard errors.

    Returns
    -------
    mean : numpy.ndarray
        Tensor entries of the pooled estimate, shape ``(d,) * 2n``.
    stderr_re, stderr_im : numpy.ndarray
        Batch-means standard errors of the real and imaginary parts.
    """
    states = np.asarray(states, dtype=complex)
    m, d = states.shape
    if n_batches < 20:
        raise ValueError("use at least 20 batches")
    if m < n_batches:
        raise ValueError("fewer samples than batches")
    tc.check_budget(d, n, extra_factor=n_batches + 1)
    edges = np.linspace(0, m, n_batches + 1).astype(int)
    sums = np.zeros((n_batches, d ** (2 * n)), dtype=complex)
    for b in range(n_batches):
        for k0 in range(edges[b], edges[b + 1], _CHUNK):
            k1 = min(k0 + _CHUNK, edges[b + 1])
            sums[b] += _member_products(states[k0:k1], n).sum(axis=0)
    counts = np.diff(edges)[:, None]
    means = sums / counts
    pooled = sums.sum(axis=0) / m
    shape = (d,) * (2 * n)
    se_re = means.real.std(axis=0, ddof=1) / np.sqrt(n_batches)
    se_im = means.imag.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return pooled.reshape(shape), se_re.reshape(shape), se_im.reshape(shape)


def generating_function(ens: WeightedEnsemble, a) -> complex:
    """``G[a] = sum_a w_a exp(sum_ij (rho_a)_ij a_ij)``."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (ens.dim, ens.dim):
        raise ValueError(f"source matrix must be {ens.dim}x{ens.dim}")
    psi = ens.states
    # rho_ij a_ij = psi^dag a^T psi
    expo = np.einsum("mi,ij,mj->m", psi, a, np.conj(psi))
    return complex(ens.weights @ np.exp(expo))


def variance_decomposition(ens: WeightedEnsemble, r, tol: float = 1e-10):
    """Split the variance of a Hermitian observable into in-state and
    across-ensemble parts.

    Returns
    -------
    (var, var1, var2) : tuple of float
        ``var1 = E[<R^2> - <R>^2]`` and ``var2 = E[<R>^2] - E[<R>]^2``,
        evaluated as contractions of the order-1 and order-2 tensors.
    """
    r = require_hermitian(r, "R", tol, ens.dim)
    rho1 = density_tensor(ens, 1)
    rho2 = density_tensor(ens, 2)
    mean_r2 = tc.contract_operators(rho1, [r @ r]).real
    mean_r = tc.contract_operators(rho1, [r]).real
    pair = tc.contract_operators(rho2, [r, r]).real
    var1 = mean_r2 - pair
    var2 = pair - mean_r**2
    var = mean_r2 - mean_r**2
    return var, var1, var2


def pair_expectation(ens: WeightedEnsemble, r, s) -> complex:
    """Ensemble average of ``<R><S>``."""
    return tc.contract_operators(density_tensor(ens, 2), [np.asarray(r), np.asarray(s)])


def generating_descent_residuals(func, a, h: float = 1e-4):
    """Finite-difference check of the two generating-function descent identities.

    For ``func(a) = E[F(rho) exp(rho . a)]``-type functionals of pure states,
    ``sum_i dG/da_ii = G`` and ``sum_j d2G/(da_ij da_jk) = dG/da_ik``.
    Derivatives are second-order central differences with step ``h``.

    Returns
    -------
    (trace_residual, chain_residual) : tuple of float
        Largest absolute mismatch of each identity.
    """
    a = np.asarray(a, dtype=complex)
    d = a.shape[0]
    basis = np.eye(d * d).reshape(d * d, d, d)

    def unit(i, j):
        return basis[i * d + j]

    g0 = func(a)
    first = np.empty((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = h * unit(i, j)
            first[i, j] = (func(a + e) - func(a - e)) / (2 * h)
    trace_res = abs(np.trace(first) - g0)
    chain = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                e1, e2 = h * unit(i, j), h * unit(j, k)
                chain[i, k] += (func(a + e1 + e2) - func(a + e1 - e2)
                                - func(a - e1 + e2) + func(a - e1 - e2)) / (4 * h * h)
    return float(trace_res), float(np.max(np.abs(chain - first)))
