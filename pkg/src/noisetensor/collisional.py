"""Collisional decoherence: localization kernel and closed-form tensor evolution.

The kernel

    F(R) = N int d^3k mu(k) (|k|/m) int dn (1 - exp(i (k - n|k|) . R)) |f(n|k|, k)|^2

is evaluated by a product quadrature: Gauss-Legendre in ``cos(theta)``,
uniform in ``phi`` for both the incoming and outgoing directions, and
Gauss-Legendre in ``|k|`` on ``[0, k_max]``.  On a position grid the order-n
tensor evolves entrywise as ``exp(-t sum_l F(R_{l+1} - R'_l))`` with
``R_{n+1} = R_1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as tc

NORM_TOL = 1e-6
_CHUNK = 2048


@dataclass(frozen=True)
class Quadrature:
    """Order parameters of the product quadrature."""

    n_radial: int = 64
    n_theta: int = 32
    n_phi: int = 32
    k_max: float = 8.0

    def doubled(self) -> "Quadrature":
        return Quadrature(2 * self.n_radial, 2 * self.n_theta, 2 * self.n_phi, self.k_max)


def sphere_rule(n_theta: int, n_phi: int):
    """Unit vectors and weights summing to ``4 pi``."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - x**2)
    dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                     np.outer(x, np.ones(n_phi))], axis=-1).reshape(-1, 3)
    weights = np.outer(w, np.full(n_phi, 2 * np.pi / n_phi)).reshape(-1)
    return dirs, weights


def radial_rule(n: int, k_max: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * k_max * (x + 1), 0.5 * k_max * w


@dataclass(frozen=True, eq=False)
class Scatterer:
    """Bath of scattering particles.

    Parameters
    ----------
    density : float
        Number density ``N``.
    mass : float
        Scatterer mass ``m``.
    mu : callable
        Momentum density ``mu(kvec)`` on arrays of shape (..., 3); must
        integrate to one over momentum space.
    amplitude2 : float or callable
        ``|f|^2``: a constant, or ``f2(k_out, k_in)`` on arrays (..., 3).
    """

    density: float
    mass: float
    mu: Callable
    amplitude2: object = 1.0


def gaussian_mu(k_th: float) -> Callable:
    """Isotropic Gaussian momentum density with width ``k_th`` per axis."""
    norm = (2 * np.pi * k_th**2) ** -1.5

    def mu(k):
        k = np.asarray(k)
        return norm * np.exp(-np.sum(k * k, axis=-1) / (2 * k_th**2))

    return mu


def collisional_kernel(scatter: Scatterer, grid, quad: Quadrature = Quadrature()) -> np.ndarray:
    """``F(R)`` at each displacement in ``grid`` (shape (P, 3) or (P,) on the x axis).

    Raises
    ------
    ValueError
        If ``mu`` does not integrate to one within ``1e-6`` on the quadrature.
    """
    r = _as_points(grid)
    kr, wr = radial_rule(quad.n_radial, quad.k_max)
    dirs, wd = sphere_rule(quad.n_theta, quad.n_phi)
    # incoming momenta k = |k| * u
    kvec = kr[:, None, None] * dirs[None, :, :]
    wk = (wr * kr**2)[:, None] * wd[None, :]
    mu = np.asarray(scatter.mu(kvec), dtype=float)
    total = float(np.sum(wk * mu))
    if abs(total - 1) > NORM_TOL:
        raise ValueError(f"momentum distribution integrates to {total:.9g}, not 1")
    flux = wk * mu * kr[:, None] / scatter.mass
    a2 = scatter.amplitude2
    out = np.zeros(r.shape[0], dtype=complex)
    if callable(a2):
        kin = kvec.reshape(-1, 3)
        fin = flux.reshape(-1)
        for p, rp in enumerate(r):
            if not rp.any():
                continue
            acc = 0j
            for c0 in range(0, kin.shape[0], _CHUNK):
                ki = kin[c0:c0 + _CHUNK]
                kmag = np.linalg.norm(ki, axis=1)
                kout = kmag[:, None, None] * dirs[None, :, :]
                f2 = np.asarray(a2(kout, np.broadcast_to(ki[:, None, :], kout.shape)))
                phase = np.exp(1j * ((ki @ rp)[:, None] - kout @ rp))
                acc += np.sum(fin[c0:c0 + _CHUNK, None] * wd[None, :] * f2 * (1 - phase))
            out[p] = acc
    else:
        # constant |f|^2: the outgoing integral factorizes
        f0 = float(a2)
        for p, rp in enumerate(r):
            if not rp.any():
                # 1 - e^0 vanishes identically; skip the roundoff of 4 pi - sum(w)
                continue
            kin_phase = np.exp(1j * kr[:, None] * (dirs @ rp)[None, :])
            out_avg = np.exp(-1j * kr[:, None] * (dirs @ rp)[None, :]) @ wd
            val = 4 * np.pi - kin_phase * out_avg[:, None]
            out[p] = f0 * np.sum(flux * val)
    return scatter.density * out


def plateau(density, mass, k_th, f0) -> float:
    """Large-separation limit ``N f0 4 pi E[|k|/m]`` for Gaussian ``mu``."""
    mean_k = k_th * np.sqrt(8 / np.pi)
    return density * f0 * 4 * np.pi * mean_k / mass


def _as_points(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = np.stack([g, np.zeros_like(g), np.zeros_like(g)], axis=1)
    if g.ndim != 2 or g.shape[1] not in (1, 2, 3):
        raise ValueError("grid must have shape (P,) or (P, dim) with dim <= 3")
    if g.shape[1] < 3:
        g = np.concatenate([g, np.zeros((g.shape[0], 3 - g.shape[1]))], axis=1)
    return g


def kernel_table(scatter: Scatterer, grid, quad: Quadrature = Quadrature()) -> np.ndarray:
    """``T[a, b] = F(R_a - R_b)`` on a position grid (P points)."""
    pts = _as_points(grid)
    diffs = pts[:, None, :] - pts[None, :, :]
    flat = diffs.reshape(-1, 3)
    # evaluate each distinct displacement once
    uniq, inv = np.unique(np.round(flat, 12), axis=0, return_inverse=True)
    vals = collisional_kernel(scatter, uniq, quad)
    return vals[inv.reshape(-1)].reshape(len(pts), len(pts))


def evolution_exponent(table, n: int) -> np.ndarray:
    """``E[i1, j1, ..., in, jn] = sum_l F(R_{i_{l+1}} - R_{j_l})`` (cyclic)."""
    table = np.asarray(table)
    p = table.shape[0]
    if table.shape != (p, p):
        raise ValueError("kernel table must be square")
    tc.check_budget(p, n)
    out = np.zeros((p,) * (2 * n), dtype=table.dtype)
    for l in range(n):
        m = (l + 1) % n
        shape = [1] * (2 * n)
        shape[2 * m] = p
        shape[2 * l + 1] = p
        # table[a, b] with a = i_{l+1}, b = j_l
        if 2 * m < 2 * l + 1:
            term = table.reshape(shape)
        else:
            term = table.T.reshape(shape)
        out = out + term
    return out


def reversed_exponent(table, n: int) -> np.ndarray:
    """``sum_l F(R_{i_l} - R_{j_{l+1}})``: the cycle run backwards."""
    table = np.asarray(table)
    p = table.shape[0]
    out = np.zeros((p,) * (2 * n), dtype=table.dtype)
    for l in range(n):
        m = (l + 1) % n
        shape = [1] * (2 * n)
        shape[2 * l] = p
        shape[2 * m + 1] = p
        term = table.reshape(shape) if 2 * l < 2 * m + 1 else table.T.reshape(shape)
        out = out + term
    return out


def collisional_evolve(rho0: tc.PairTensor, table, t: float) -> tc.PairTensor:
    """Entrywise closed-form solution at time ``t``."""
    table = np.asarray(table)
    if rho0.dim != table.shape[0]:
        raise ValueError(f"tensor dimension {rho0.dim} does not match grid of {table.shape[0]}")
    expo = evolution_exponent(table, rho0.order)
    return rho0.with_entries(np.exp(-t * expo) * rho0.entries)


def symmetric_antisymmetric_exponent(table):
    """``(F^S, F^A)`` for the order-3 exponent: half sum and half difference of
    the forward and backward cycles."""
    fwd = evolution_exponent(table, 3)
    bwd = reversed_exponent(table, 3)
    return 0.5 * (fwd + bwd), 0.5 * (fwd - bwd)
