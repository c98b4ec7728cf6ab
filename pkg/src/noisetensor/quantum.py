"""Density tensors of a system entangled with a quantum environment.

For a joint state ``rho`` on ``E (x) S`` (environment-major basis
``|e, i>``) the environment blocks ``rho_ij = <i| rho |j>`` are operators on
``E``.  The order-``n`` tensor is ``Tr_E rho_{i1 j1} ... rho_{in jn}``.  It is
only cyclically symmetric and its order-1 member is the reduced density matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .linalg import comm, dag, matrix_from_json, matrix_to_json, min_eigenvalue, require_hermitian

STATE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BipartiteState:
    """Joint environment-system density matrix.

    Parameters
    ----------
    d_env, d_sys : int
    rho : array_like, shape (d_env * d_sys, d_env * d_sys)
        Flat index ``e * d_sys + i``.
    pure : bool
        If set, ``Tr rho^2 = 1`` is enforced.
    """

    d_env: int
    d_sys: int
    rho: np.ndarray
    pure: bool = False

    def __post_init__(self):
        dim = self.d_env * self.d_sys
        if self.d_env < 1 or self.d_sys < 1:
            raise ValueError("dimensions must be positive")
        rho = require_hermitian(self.rho, "rho", STATE_TOL, dim)
        if abs(np.trace(rho) - 1) > STATE_TOL:
            raise ValueError(f"trace of rho is {np.trace(rho).real:.12g}, not 1")
        if min_eigenvalue(rho) < -STATE_TOL:
            raise ValueError(f"rho has eigenvalue {min_eigenvalue(rho):.3g} < 0")
        if self.pure and abs(np.trace(rho @ rho).real - 1) > STATE_TOL:
            raise ValueError("state flagged pure but Tr rho^2 != 1")
        rho = rho.copy()
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_vector(cls, psi, d_env: int, d_sys: int) -> "BipartiteState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(d_env, d_sys, np.outer(psi, np.conj(psi)), pure=True)

    @classmethod
    def product(cls, rho_env, rho_sys, pure: bool = False) -> "BipartiteState":
        rho_env, rho_sys = np.asarray(rho_env), np.asarray(rho_sys)
        return cls(rho_env.shape[0], rho_sys.shape[0], np.kron(rho_env, rho_sys), pure)

    def blocks(self) -> np.ndarray:
        """All blocks at once: ``out[i, j]`` is ``<i| rho |j>`` on E."""
        r = self.rho.reshape(self.d_env, self.d_sys, self.d_env, self.d_sys)
        return r.transpose(1, 3, 0, 2)

    def env_marginal(self) -> np.ndarray:
        return np.einsum("iiab->ab", self.blocks())

    def sys_marginal(self) -> np.ndarray:
        return np.einsum("aiaj->ij", self.rho.reshape(self.d_env, self.d_sys,
                                                      self.d_env, self.d_sys))

    def to_json(self) -> dict:
        return {"dE": self.d_env, "dS": self.d_sys, "rho": matrix_to_json(self.rho),
                "pure": bool(self.pure)}

    @classmethod
    def from_json(cls, obj: dict) -> "BipartiteState":
        return cls(int(obj["dE"]), int(obj["dS"]), matrix_from_json(obj["rho"], "rho"),
                   bool(obj.get("pure", False)))


@dataclass(frozen=True, eq=False)
class WeightedStateFamily:
    """Mixture of bipartite states with nonnegative weights summing to one."""

    weights: tuple
    states: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        states = tuple(self.states)
        if not states:
            raise ValueError("family is empty")
        if w.size != len(states):
            raise ValueError(f"{w.size} weights for {len(states)} states")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        dims = {(s.d_env, s.d_sys) for s in states}
        if len(dims) != 1:
            raise ValueError("all members must share dimensions")
        object.__setattr__(self, "weights", tuple(w / w.sum()))
        object.__setattr__(self, "states", states)

    @property
    def d_sys(self) -> int:
        return self.states[0].d_sys


def system_block(s: BipartiteState, i: int, j: int) -> np.ndarray:
    """Environment operator ``(block)_{e1 e2} = <e1 i| rho |e2 j>``."""
    if not (0 <= i < s.d_sys and 0 <= j < s.d_sys):
        raise IndexError(f"system indices ({i}, {j}) out of range 0..{s.d_sys - 1}")
    return s.blocks()[i, j].copy()


def trace_tensor(s: BipartiteState, n: int) -> tc.PairTensor:
    """``Tr_E rho_{i1 j1} ... rho_{in jn}`` as a quantum-flavor tensor."""
    if n < 1:
        raise ValueError("order must be >= 1")
    ds, de = s.d_sys, s.d_env
    tc.check_budget(ds, n, extra_factor=2 * de * de)
    b = s.blocks()
    acc = b.reshape(ds * ds, de, de)
    for _ in range(n - 1):
        # acc[P, a, c] @ b[i, j, c, e] -> acc[P, i, j, a, e]
        acc = np.einsum("pac,ijce->pijae", acc, b).reshape(-1, de, de)
    out = np.trace(acc, axis1=1, axis2=2)
    return tc.PairTensor(out.reshape((ds,) * (2 * n)), tc.QUANTUM)


def mixed_trace_tensor(f: WeightedStateFamily, n: int) -> tc.PairTensor:
    """Weighted sum of :func:`trace_tensor` over the family."""
    out = sum(w * trace_tensor(s, n).entries for w, s in zip(f.weights, f.states))
    return tc.PairTensor(out, tc.QUANTUM)


def classical_variant(f: WeightedStateFamily, n: int) -> tc.PairTensor:
    """``sum_a w_a (Tr_E rho_a)^{(x) n}``: the reduced states treated as
    classical ensemble members."""
    tc.check_budget(f.d_sys, n, extra_factor=2)
    out = sum(w * tc.outer_array([s.sys_marginal()] * n) for w, s in zip(f.weights, f.states))
    return tc.PairTensor(out, tc.CLASSICAL)


def environment_operator(s: BipartiteState, a_sys) -> np.ndarray:
    """``A_E = sum_ij rho_ij (A_S)_ji`` on the environment."""
    a = require_hermitian(a_sys, "A_S", STATE_TOL, s.d_sys)
    return np.einsum("ijab,ji->ab", s.blocks(), a)


def environment_fluctuation(s: BipartiteState, a_sys) -> float:
    """``Tr rho_E A_E^2 - (Tr rho_E A_E)^2`` for the induced environment operator.

    The value is meaningful as a fluctuation for pure joint states; mixed
    input still returns it but emits a warning.
    """
    if abs(np.trace(s.rho @ s.rho).real - 1) > STATE_TOL:
        warnings.warn("environment_fluctuation is interpreted for pure joint states",
                      RuntimeWarning, stacklevel=2)
    ae = environment_operator(s, a_sys)
    re = s.env_marginal()
    m1 = np.trace(re @ ae).real
    m2 = np.trace(re @ ae @ ae).real
    return float(m2 - m1 * m1)


def fluctuation_from_tensors(s: BipartiteState, a_sys) -> float:
    """Same quantity from the fully symmetric part of ``rho^(3)`` and ``rho^(2)``."""
    a = require_hermitian(a_sys, "A_S", STATE_TOL, s.d_sys)
    sym, _ = tc.symmetric_antisymmetric_split(trace_tensor(s, 3))
    t3 = tc.contract_operators(sym, [None, a, a]).real
    t2 = tc.contract_operators(trace_tensor(s, 2), [None, a]).real
    return float(t3 - t2 * t2)


def _full_hamiltonian(d_env, d_sys, h_sys, h_env, h_int):
    h_sys = np.asarray(h_sys, dtype=complex)
    h_env = np.asarray(h_env, dtype=complex)
    h_int = np.asarray(h_int, dtype=complex)
    if h_sys.shape == (d_sys, d_sys):
        h_sys = np.kron(np.eye(d_env), h_sys)
    if h_env.shape == (d_env, d_env):
        h_env = np.kron(h_env, np.eye(d_sys))
    return h_sys, h_env, h_int


def pointer_variance_rate(s: BipartiteState, h_sys, h_env, h_int, a, tol: float = 1e-10) -> float:
    """Time derivative of ``Var(A)`` for a pointer observable ``A`` on S.

    ``A`` must commute with ``H_E`` and ``H_int``; then only ``H_S`` moves the
    variance and

        dVar/dt = i Tr rho1 [H_S, A^2] - 2 i Tr(rho1 A) Tr(rho1 [H_S, A]).

    ``H_S`` and ``H_E`` may be given on their own factor or on the joint space.
    """
    a = require_hermitian(a, "A", tol, s.d_sys)
    dim = s.d_env * s.d_sys
    hs_full, he_full, hi = _full_hamiltonian(s.d_env, s.d_sys, h_sys, h_env, h_int)
    for name, h in (("H_S", hs_full), ("H_E", he_full), ("H_int", hi)):
        require_hermitian(h, name, tol, dim)
    a_full = np.kron(np.eye(s.d_env), a)
    for name, h in (("H_E", he_full), ("H_int", hi)):
        defect = tc.max_abs(comm(a_full, h))
        if defect > tol:
            raise ValueError(f"A does not commute with {name} (defect {defect:.3g})")
    h_s = np.asarray(h_sys, dtype=complex)
    if h_s.shape != (s.d_sys, s.d_sys):
        raise ValueError("H_S must act on the system factor for the reduced formula")
    rho1 = s.sys_marginal()
    c1 = comm(h_s, a)
    c2 = comm(h_s, a @ a)
    val = 1j * np.trace(rho1 @ c2) - 2j * np.trace(rho1 @ a) * np.trace(rho1 @ c1)
    return float(val.real)


def exact_variance(s: BipartiteState, h_sys, h_env, h_int, a, t: float) -> float:
    """``Var(A)`` after exact unitary evolution for time ``t``."""
    hs, he, hi = _full_hamiltonian(s.d_env, s.d_sys, h_sys, h_env, h_int)
    lam, vec = np.linalg.eigh(hs + he + hi)
    u = (vec * np.exp(-1j * lam * t)) @ dag(vec)
    rho = u @ s.rho @ dag(u)
    a_full = np.kron(np.eye(s.d_env), np.asarray(a, dtype=complex))
    m1 = np.trace(rho @ a_full).real
    return float(np.trace(rho @ a_full @ a_full).real - m1 * m1)


def pointer_admissible_interaction(rng, d_env: int, a) -> np.ndarray:
    """Random ``H_int = sum_k X_k (x) P_k`` with ``P_k`` the spectral
    projectors of ``A``; it commutes with ``1 (x) A`` by construction."""
    from .linalg import random_hermitian
    a = np.asarray(a, dtype=complex)
    lam, vec = np.linalg.eigh(a)
    groups = []
    for k, l in enumerate(lam):
        if groups and abs(l - lam[groups[-1][0]]) < 1e-9:
            groups[-1].append(k)
        else:
            groups.append([k])
    out = 0
    for g in groups:
        p = vec[:, g] @ dag(vec[:, g])
        out = out + np.kron(random_hermitian(rng, d_env), p)
    return out


def anticommutator_rate(s: BipartiteState, x, p, mass: float) -> float:
    """``(1/M) <{X - <X>, P - <P>}>`` in the reduced system state."""
    rho1 = s.sys_marginal()
    d = s.d_sys
    mx = np.trace(rho1 @ x).real
    mp = np.trace(rho1 @ p).real
    dx = x - mx * np.eye(d)
    dp = p - mp * np.eye(d)
    return float(np.trace(rho1 @ (dx @ dp + dp @ dx)).real / mass)


def schwarz_bound(s: BipartiteState, x, p, mass: float) -> float:
    """``(2/M) Delta X Delta P`` in the reduced system state."""
    rho1 = s.sys_marginal()
    var = []
    for o in (x, p):
        m = np.trace(rho1 @ o).real
        var.append(np.trace(rho1 @ o @ o).real - m * m)
    return float(2 / mass * np.sqrt(max(var[0], 0) * max(var[1], 0)))
