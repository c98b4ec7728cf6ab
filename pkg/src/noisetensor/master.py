"""Time-local generators for density tensors and an RK4 co-integrator.

Every generator here expresses ``d rho^(n)/dt`` through ``rho^(1)`` alone.
Generators accept one matrix per slot (``rhos``) so that the descent
property can be checked directly.  Contracting the column of slot ``l`` with
the row of slot ``l + 1`` gives the order ``n - 1`` generator evaluated with
``rho_l rho_{l+1}`` in the merged slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import tensor as tc
from .linalg import acomm, comm, dag, position_momentum

SPEC_TOL = 1e-10


def _slot_list(rhos, n: int, d: int):
    rhos = np.asarray(rhos, dtype=complex)
    if rhos.ndim == 2:
        rhos = np.broadcast_to(rhos, (n, d, d))
    if rhos.shape != (n, d, d):
        raise ValueError(f"expected {n} matrices of size {d}x{d}, got {rhos.shape}")
    return rhos


def _neighbours(n: int):
    """Cyclic neighbour pairs ``(l, l+1 mod n)``; for n = 2 both orders appear."""
    return [(l, (l + 1) % n) for l in range(n)] if n >= 2 else []


# -- Born-Markov ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BornMarkovSpec:
    """Born-Markov coefficient tables.

    Parameters
    ----------
    omegas : array_like, shape (F,)
        Bohr frequencies.
    ops : array_like, shape (F, K, d, d)
        ``A_alpha(omega)``; when ``-omega`` is also listed its operators must
        be the adjoints.
    gamma : array_like, shape (F, K, K)
        Hermitian positive semidefinite rate matrices.
    lamb : array_like, shape (F, K, K), optional
        Hermitian Lamb-shift matrices; zero by default.
    """

    omegas: np.ndarray
    ops: np.ndarray
    gamma: np.ndarray
    lamb: np.ndarray | None = None
    _lamb_op: np.ndarray = field(init=False, repr=False)
    _damp_op: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float).reshape(-1)
        ops = np.asarray(self.ops, dtype=complex)
        if ops.ndim != 4 or ops.shape[0] != om.size or ops.shape[2] != ops.shape[3]:
            raise ValueError(f"ops must have shape (F, K, d, d) with F={om.size}, got {ops.shape}")
        f, k = ops.shape[:2]
        gam = np.asarray(self.gamma, dtype=complex).reshape(f, k, k)
        lamb = (np.zeros((f, k, k), dtype=complex) if self.lamb is None
                else np.asarray(self.lamb, dtype=complex).reshape(f, k, k))
        for w in range(f):
            if tc.max_abs(gam[w] - dag(gam[w])) > SPEC_TOL:
                raise ValueError(f"gamma at omega={om[w]} is not Hermitian")
            if np.linalg.eigvalsh(gam[w])[0] < -SPEC_TOL:
                raise ValueError(f"gamma at omega={om[w]} is not positive semidefinite")
            if tc.max_abs(lamb[w] - dag(lamb[w])) > SPEC_TOL:
                raise ValueError(f"Lamb-shift table at omega={om[w]} is not Hermitian")
        for w in range(f):
            mirror = np.nonzero(np.abs(om + om[w]) < 1e-12)[0]
            for m in mirror:
                if tc.max_abs(ops[m] - dag(ops[w])) > SPEC_TOL:
                    raise ValueError(f"A(-omega) is not the adjoint of A(omega) at omega={om[w]}")
        lamb_op = np.einsum("wab,wajk,wbkl->jl", lamb, np.conj(ops).swapaxes(2, 3), ops)
        damp_op = np.einsum("wab,wajk,wbkl->jl", gam, np.conj(ops).swapaxes(2, 3), ops)
        for name, val in (("omegas", om), ("ops", ops), ("gamma", gam), ("lamb", lamb),
                          ("_lamb_op", lamb_op), ("_damp_op", damp_op)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.ops.shape[2]


def qo_rate(omega, beta: float) -> np.ndarray:
    """Spontaneous plus stimulated emission rate ``(4 w^3 / 3)(1 + N(w))``.

    ``N(w) = 1 / (exp(beta w) - 1)``.  The same expression at negative
    frequency gives the absorption rate ``(4|w|^3/3) N(|w|)``.
    """
    w = np.asarray(omega, dtype=float)
    out = np.zeros_like(w)
    nz = w != 0
    cube = 4.0 * w[nz] ** 3 / 3.0
    if math.isinf(beta):
        out[nz] = np.where(w[nz] > 0, cube, 0.0)
    else:
        # 1 + N(w) = 1 / (1 - exp(-beta w))
        out[nz] = cube / (-np.expm1(-beta * w[nz]))
    return out if out.ndim else float(out)


def quantum_optical_spec(omegas, vector_ops, beta: float, lamb_shift=None) -> BornMarkovSpec:
    """Born-Markov spec with isotropic vector operators.

    Parameters
    ----------
    omegas : array_like, shape (F,)
    vector_ops : array_like, shape (F, 3, d, d)
        Components of ``A(omega)``.
    beta : float
        Inverse temperature; ``inf`` for the vacuum.
    lamb_shift : callable or None
        ``S(omega)``; zero when omitted.
    """
    om = np.asarray(omegas, dtype=float).reshape(-1)
    ops = np.asarray(vector_ops, dtype=complex)
    k = ops.shape[1]
    rates = np.atleast_1d(qo_rate(om, beta))
    gam = rates[:, None, None] * np.eye(k)
    lamb = None
    if lamb_shift is not None:
        lamb = np.array([lamb_shift(w) for w in om], dtype=float)[:, None, None] * np.eye(k)
    return BornMarkovSpec(om, ops, gam, lamb)


def two_level_decay_spec(gamma0: float = 1.0, beta: float = math.inf) -> tuple[BornMarkovSpec, float]:
    """Two-level atom with level ``|1>`` excited, tuned so ``gamma(w0) = gamma0``
    at zero temperature.  Returns the spec and ``w0``."""
    from .linalg import SIGMA_MINUS, SIGMA_PLUS
    w0 = (3.0 * gamma0 / 4.0) ** (1.0 / 3.0)
    zero = np.zeros((2, 2), dtype=complex)
    ops = np.array([[SIGMA_MINUS, zero, zero], [SIGMA_PLUS, zero, zero]])
    return quantum_optical_spec([w0, -w0], ops, beta), w0


def random_born_markov_spec(rng, dim: int, n_pos: int = 2, n_ops: int = 2,
                            zero_frequency: bool = True) -> BornMarkovSpec:
    """Random admissible spec: ``n_pos`` frequency pairs ``+-w`` with
    ``A(-w) = A(w)^dag``, optionally ``w = 0`` with Hermitian operators,
    random PSD rate tables and Hermitian Lamb-shift tables."""
    from .linalg import random_hermitian, random_matrix
    omegas, ops = [], []
    for w in np.sort(rng.uniform(0.2, 2.0, n_pos)):
        a = np.array([random_matrix(rng, dim) for _ in range(n_ops)])
        omegas += [w, -w]
        ops += [a, np.conj(a).swapaxes(1, 2)]
    if zero_frequency:
        omegas.append(0.0)
        ops.append(np.array([random_hermitian(rng, dim) for _ in range(n_ops)]))
    f = len(omegas)
    g = rng.normal(size=(f, n_ops, n_ops)) + 1j * rng.normal(size=(f, n_ops, n_ops))
    gamma = 0.5 * g @ np.conj(g).swapaxes(1, 2)
    lamb = np.array([random_hermitian(rng, n_ops, 0.5) for _ in range(f)])
    return BornMarkovSpec(np.array(omegas), np.array(ops), gamma, lamb)


def born_markov_generator(spec: BornMarkovSpec, rhos, n: int) -> tc.PairTensor:
    """Order-``n`` drift built from single-slot matrices.

    Each slot carries ``i[rho_l, L] - 1/2 {M, rho_l}`` with the Lamb-shift
    operator ``L`` and damping operator ``M``; at ``n = 1`` the gain term
    ``sum gamma_ab A_b rho A_a^dag`` is added.  For ``n >= 2`` each cyclic
    neighbour pair ``(l, l+1)`` adds ``sum gamma_ab (rho_l A_a^dag) (x) (A_b rho_{l+1})``.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    d = spec.dim
    tc.check_budget(d, n, extra_factor=3)
    rhos = _slot_list(rhos, n, d)
    lop, mop = spec._lamb_op, spec._damp_op
    ops = spec.ops
    adag = np.conj(ops).swapaxes(2, 3)

    def single(r):
        out = 1j * comm(r, lop) - 0.5 * acomm(mop, r)
        if n == 1:
            weighted = np.einsum("wab,wbik->waik", spec.gamma, ops @ r)
            out = out + (weighted @ adag).sum(axis=(0, 1))
        return out

    items = [((l,), single(rhos[l])) for l in range(n)]
    for l, m in _neighbours(n):
        left = rhos[l] @ adag
        right = np.einsum("wab,wbik->waik", spec.gamma, ops @ rhos[m])
        items.append(((l, m), np.einsum("waij,wakl->ijkl", left, right)))
    return tc.PairTensor(_product_except(rhos, n)(items), tc.QUANTUM)


def _product_except(rhos, n):
    """Insert items into a product whose untouched slots carry their own rho."""

    def build(items):
        out = 0
        for slots, arr in items:
            rest = [k for k in range(n) if k not in slots]
            full = np.asarray(arr)
            for k in rest:
                full = np.multiply.outer(full, rhos[k])
            order = list(slots) + rest
            out = out + tc.permute_pairs(full, [order.index(k) for k in range(n)])
        return out

    return build


# -- Caldeira-Leggett -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CaldeiraLeggettSpec:
    """High-temperature quantum Brownian motion in a truncated Fock basis.

    Parameters
    ----------
    mass, gamma, kT : float
    dim : int
        Fock truncation, at least 4.
    omega0 : float
        Reference frequency of the oscillator basis that defines ``x`` and ``p``.
    free_hamiltonian : bool
        Add ``-i[p^2/2m, rho]`` per slot; off by default since the generator
        describes the dissipative part only.
    terms : {"all", "thermal", "damping"}
        Restrict to one group of terms; used to isolate cancellations.
    """

    mass: float
    gamma: float
    kT: float
    dim: int
    omega0: float = 1.0
    free_hamiltonian: bool = False
    terms: str = "all"
    x: np.ndarray = field(init=False, repr=False)
    p: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 4:
            raise ValueError("truncation dimension must be at least 4")
        if self.mass <= 0 or self.gamma < 0 or self.kT < 0:
            raise ValueError("need mass > 0, gamma >= 0, kT >= 0")
        if self.terms not in ("all", "thermal", "damping"):
            raise ValueError(f"unknown term selection {self.terms!r}")
        x, p = position_momentum(self.dim, self.mass, self.omega0)
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)


def caldeira_leggett_generator(spec: CaldeiraLeggettSpec, rhos, n: int) -> tc.PairTensor:
    """Order-``n`` Caldeira-Leggett drift.

    ``n = 1``: ``-i gamma [x, {p, rho}] - 2 m gamma kT [x, [x, rho]]``.
    ``n >= 2``: each slot carries ``-2 m gamma kT {x^2, rho} + i gamma (rho p x - x p rho)``
    and each cyclic neighbour pair ``(l, l+1)`` carries
    ``4 m gamma kT (rho x) (x) (x rho) + i gamma [(rho x) (x) (p rho) - (rho p) (x) (x rho)]``.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    d = spec.dim
    tc.check_budget(d, n, extra_factor=3)
    rhos = _slot_list(rhos, n, d)
    x, p = spec.x, spec.p
    th = 2 * spec.mass * spec.gamma * spec.kT if spec.terms in ("all", "thermal") else 0.0
    dm = spec.gamma if spec.terms in ("all", "damping") else 0.0
    hfree = p @ p / (2 * spec.mass)

    def single(r):
        if n == 1:
            out = -1j * dm * comm(x, acomm(p, r)) - th * comm(x, comm(x, r))
        else:
            out = -th * acomm(x @ x, r) + 1j * dm * (r @ p @ x - x @ p @ r)
        if spec.free_hamiltonian:
            out = out - 1j * comm(hfree, r)
        return out

    items = [((l,), single(rhos[l])) for l in range(n)]
    for l, m in _neighbours(n):
        rl, rm = rhos[l], rhos[m]
        cross = (2 * th * tc.outer_array([rl @ x, x @ rm])
                 + 1j * dm * (tc.outer_array([rl @ x, p @ rm]) - tc.outer_array([rl @ p, x @ rm])))
        items.append(((l, m), cross))
    return tc.PairTensor(_product_except(rhos, n)(items), tc.QUANTUM)


def thermal_sandwich_term(spec: CaldeiraLeggettSpec, rho) -> np.ndarray:
    """Collected ``rho x^2 rho`` part of the chain-contracted order-2 thermal drift.

    The two slot terms contribute ``-2 m gamma kT`` each and the neighbour
    term ``+4 m gamma kT``; what remains after removing the
    ``{x^2, rho^2}`` and ``x rho^2 x`` pieces should vanish.
    """
    thermal = replace(spec, terms="thermal")
    rho = np.asarray(rho, dtype=complex)
    th = 2 * spec.mass * spec.gamma * spec.kT
    x, r2 = spec.x, rho @ rho
    contracted = tc.contract_chain(caldeira_leggett_generator(thermal, rho, 2), 1, 2).entries
    return contracted - (-th * acomm(x @ x, r2) + 2 * th * x @ r2 @ x)


def damping_alternative(spec: CaldeiraLeggettSpec, rho) -> np.ndarray:
    """``gamma rho + (i/2) gamma [rho, {x, p}]``: equal to
    ``i gamma (rho p x - x p rho)`` wherever ``[x, p] = i`` holds on the
    support of ``rho``."""
    x, p = spec.x, spec.p
    return spec.gamma * rho + 0.5j * spec.gamma * comm(rho, acomm(x, p))


def damping_direct(spec: CaldeiraLeggettSpec, rho) -> np.ndarray:
    x, p = spec.x, spec.p
    return 1j * spec.gamma * (rho @ p @ x - x @ p @ rho)


# -- integration ------------------------------------------------------------


class StepRejected(RuntimeError):
    """The step-halving error estimate stayed above tolerance at minimum dt."""


@dataclass
class HierarchySeries:
    """Output of :func:`integrate_hierarchy`.

    ``rho1[k]`` and ``rhon[k]`` are the states at ``times[k]``;
    ``descent_residual[k]`` compares the chain contraction of ``rhon`` with
    an auxiliary order ``n - 1`` solution; ``error_estimate`` is the
    step-halving (Richardson) error of the final accepted run.
    """

    times: np.ndarray
    rho1: np.ndarray
    rhon: np.ndarray
    dt: float
    error_estimate: float
    descent_residual: np.ndarray | None = None


def _rk4_run(f, y0, t_grid, dt):
    """Fixed-step RK4 for ``y' = f(y)``; ``y`` is a tuple of arrays."""
    ys = [tuple(np.array(a, dtype=complex) for a in y0)]
    y = ys[0]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        m = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
        h = (t1 - t0) / m
        for _ in range(m):
            k1 = f(y)
            k2 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k1)))
            k3 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k2)))
            k4 = f(tuple(a + h * b for a, b in zip(y, k3)))
            y = tuple(a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
                      for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
        ys.append(y)
    return ys


def integrate_hierarchy(generator: Callable, rho1_0, rhon_0, t_grid: Sequence[float],
                        dt: float, n: int | None = None, tol: float | None = None,
                        dt_min: float = 1e-8, monitor_descent: bool = True) -> HierarchySeries:
    """Co-integrate ``rho^(1)`` and ``rho^(n)`` with classical RK4.

    Parameters
    ----------
    generator : callable
        ``generator(rhos, n) -> PairTensor`` with one matrix per slot, as
        :func:`born_markov_generator` and :func:`caldeira_leggett_generator`.
    rho1_0 : array_like, shape (d, d)
    rhon_0 : PairTensor or array_like
        Order-``n`` initial data, for example ``rho1_0`` to the ``n``-th power.
    t_grid : sequence of float
        Increasing output times starting at the initial time.
    dt : float
        Maximal RK4 step; each output interval is split into equal steps.
    tol : float, optional
        If given, halve ``dt`` until the step-halving estimate
        ``max|y_dt - y_dt/2| / 15`` is below ``tol``.
    dt_min : float
        Smallest step tried before :class:`StepRejected` is raised.
    monitor_descent : bool
        Also integrate the order ``n - 1`` generator with ``(rho^(1))^2`` in
        its first slot and report its distance to the chain contraction of
        ``rho^(n)`` at each output time.
    """
    rho1_0 = np.asarray(rho1_0, dtype=complex)
    d = rho1_0.shape[0]
    rhon_arr = np.asarray(getattr(rhon_0, "entries", rhon_0), dtype=complex)
    if n is None:
        n = rhon_arr.ndim // 2
    if rhon_arr.shape != (d,) * (2 * n):
        raise ValueError(f"initial order-{n} data has shape {rhon_arr.shape}")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if dt <= 0:
        raise ValueError("dt must be positive")
    tc.check_budget(d, n, extra_factor=12)
    with_aux = monitor_descent and n >= 2
    aux0 = tc.contract_chain(tc.PairTensor(rhon_arr), 1, 2).entries if with_aux else None

    def rhs(y):
        r1 = y[0]
        out = [generator(r1, 1).entries, generator(r1, n).entries]
        if with_aux:
            slots = [r1 @ r1] + [r1] * (n - 2)
            out.append(generator(np.array(slots), n - 1).entries)
        return tuple(out)

    y0 = (rho1_0, rhon_arr) + ((aux0,) if with_aux else ())
    while True:
        ys = _rk4_run(rhs, y0, t_grid, dt)
        half = _rk4_run(rhs, y0, t_grid, dt / 2)
        err = max(tc.max_abs(a - b) for ya, yb in zip(ys, half) for a, b in zip(ya, yb)) / 15
        if tol is None or err <= tol:
            break
        dt /= 2
        if dt < dt_min:
            raise StepRejected(f"error estimate {err:.3g} above {tol} at dt={2 * dt:.3g}")
    rho1 = np.array([y[0] for y in ys])
    rhon = np.array([y[1] for y in ys])
    resid = None
    if with_aux:
        resid = np.array([tc.max_abs(tc.contract_chain(tc.PairTensor(y[1]), 1, 2).entries - y[2])
                          for y in ys])
    return HierarchySeries(t_grid, rho1, rhon, dt, float(err), resid)
