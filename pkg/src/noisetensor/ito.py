"""Diffusive (Ito) unraveling of a Lindblad equation.

The stochastic Schrodinger equation

    d psi = -i H_psi psi dt + sum_k (c_k - <c_k>) psi dxi_k^*
    -i H_psi = -i H - 1/2 sum_k (c_k^dag c_k - 2 <c_k>^* c_k + |<c_k>|^2)

with complex Wiener increments obeying ``dxi_j dxi_k^* = delta_jk dt`` and
``dxi_j dxi_k = u_jk dt`` reproduces the Lindblad equation on average for
every admissible ``u``.  The ``n >= 2`` density tensors do depend on ``u``
and on the phase of each ``c_k``; :func:`hierarchy_drift` gives the per-state
drift that shows it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from . import trajectories as tj
from .linalg import dag, matrix_from_json, matrix_to_json, require_hermitian, require_square

MODEL_TOL = 1e-12
EIG_REJECT = 1e-10


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian, Lindblad operators and noise-correlation matrix ``u``.

    Parameters
    ----------
    H : array_like, shape (d, d)
        Hermitian within ``1e-12``.
    lindblads : array_like, shape (K, d, d)
    u : array_like, shape (K, K), optional
        Complex symmetric with operator norm at most one.  Defaults to zero
        (isotropic complex noise).
    """

    H: np.ndarray
    lindblads: np.ndarray
    u: np.ndarray | None = None
    _noise_factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = require_hermitian(self.H, "H", MODEL_TOL)
        d = h.shape[0]
        cs = np.asarray(self.lindblads, dtype=complex)
        if cs.ndim == 2:
            cs = cs[None]
        if cs.size == 0:
            cs = np.zeros((0, d, d), dtype=complex)
        if cs.ndim != 3 or cs.shape[1:] != (d, d):
            raise ValueError(f"lindblads must have shape (K, {d}, {d}), got {cs.shape}")
        for k, c in enumerate(cs):
            require_square(c, f"lindblads[{k}]", d)
        k_ops = cs.shape[0]
        u = np.zeros((k_ops, k_ops), dtype=complex) if self.u is None else np.asarray(self.u, dtype=complex)
        if u.shape != (k_ops, k_ops):
            raise ValueError(f"u must be {k_ops}x{k_ops}, got {u.shape}")
        if tc.max_abs(u - u.T) > MODEL_TOL:
            raise ValueError("u must be symmetric")
        if k_ops and np.linalg.norm(u, 2) > 1 + MODEL_TOL:
            raise ValueError(f"operator norm of u is {np.linalg.norm(u, 2):.6g} > 1")
        for a in (h, cs, u):
            a.setflags(write=False)
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "lindblads", cs)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "_noise_factor", noise_factor(u))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def n_ops(self) -> int:
        return self.lindblads.shape[0]

    def to_json(self) -> dict:
        return {"dim": self.dim, "H": matrix_to_json(self.H),
                "lindblads": [matrix_to_json(c) for c in self.lindblads],
                "u": matrix_to_json(self.u) if self.n_ops else []}

    @classmethod
    def from_json(cls, obj: dict) -> "LindbladModel":
        d = int(obj["dim"])
        h = matrix_from_json(obj["H"], "H")
        cs = [matrix_from_json(c, f"lindblads[{k}]") for k, c in enumerate(obj.get("lindblads", []))]
        cs = np.array(cs) if cs else np.zeros((0, d, d), dtype=complex)
        u = obj.get("u")
        u = matrix_from_json(u, "u") if u else None
        if h.shape != (d, d):
            raise ValueError(f"H does not match dim={d}")
        return cls(h, cs, u)


@dataclass(frozen=True)
class SdeConfig:
    """Time grid and sampling parameters for a trajectory run."""

    dt: float
    steps: int
    n_traj: int
    seed: int
    renormalize: bool = True
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 0 or self.n_traj < 2:
            raise ValueError("need steps >= 0 and n_traj >= 2")


def noise_factor(u) -> np.ndarray:
    """Real ``2K x 2K`` factor ``L`` with ``L L^T = [[I+Re u, Im u], [Im u, I-Re u]]``.

    ``(Re dxi, Im dxi) = sqrt(dt/2) L z`` for standard normal ``z``.
    """
    u = np.asarray(u, dtype=complex)
    k = u.shape[0]
    eye = np.eye(k)
    cov = np.block([[eye + u.real, u.imag], [u.imag, eye - u.real]])
    lam, vec = np.linalg.eigh(cov)
    if k and lam[0] < -EIG_REJECT:
        raise ValueError(f"noise covariance not positive semidefinite (eigenvalue {lam[0]:.3g})")
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def increments_from_normals(factor, z, dt: float) -> np.ndarray:
    """Map standard normals ``z[..., 2K]`` to complex increments ``[..., K]``."""
    k = factor.shape[0] // 2
    x = np.sqrt(dt / 2) * (z @ factor.T)
    return x[..., :k] + 1j * x[..., k:]


def sample_wiener_increments(u, dt: float, rng, size=None) -> np.ndarray:
    """Draw complex increments with ``dxi dxi^* = dt`` and ``dxi dxi = u dt``.

    Parameters
    ----------
    u : array_like, shape (K, K)
    rng : numpy.random.Generator or noisetensor.rng.Stream
        A ``Stream`` is read at counters ``(0..size-1, 0)``.
    size : int, optional
        Number of independent draws; ``None`` returns a single ``(K,)`` draw.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    factor = noise_factor(u)
    k2 = factor.shape[0]
    m = 1 if size is None else int(size)
    if hasattr(rng, "normals"):
        z = rng.normals(np.arange(m, dtype=np.uint64), 0, count=k2)
    else:
        z = rng.standard_normal((m, k2))
    out = increments_from_normals(factor, z, dt)
    return out[0] if size is None else out


def lindblad_rhs(model: LindbladModel, rho) -> np.ndarray:
    """``-i[H, rho] + sum_k (c_k rho c_k^dag - 1/2 {c_k^dag c_k, rho})``."""
    rho = require_square(rho, "rho", model.dim)
    h, cs = model.H, model.lindblads
    out = -1j * (h @ rho - rho @ h)
    for c in cs:
        cdc = dag(c) @ c
        out += c @ rho @ dag(c) - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def _rho(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, np.conj(psi))


def _fluct(model, psi):
    """``(c_k - <c_k>) psi`` for every k, shape (K, d), and ``<c_k>``."""
    cpsi = model.lindblads @ psi
    ec = cpsi @ np.conj(psi)
    return cpsi - ec[:, None] * psi[None, :], ec


def transition_rate_operator(model: LindbladModel, psi) -> np.ndarray:
    """``W = sum_k (c_k - <c_k>) rho (c_k - <c_k>)^dag`` at a pure state."""
    psi = np.asarray(psi, dtype=complex)
    f, _ = _fluct(model, psi)
    return f.T @ np.conj(f)


def transition_rate_operator_lindblad_form(model: LindbladModel, psi) -> np.ndarray:
    """Same operator written as ``L rho - {rho, L rho} + rho Tr(rho L rho)``."""
    rho = _rho(psi)
    lr = lindblad_rhs(model, rho)
    return lr - (rho @ lr + lr @ rho) + rho * np.trace(rho @ lr)


def _batch_step(model: LindbladModel, psi, xi, dt: float, renormalize: bool = True):
    """Euler-Maruyama step on a batch ``psi`` (B, d) with increments ``xi`` (B, K)."""
    cs = model.lindblads
    out = psi - 1j * dt * (psi @ model.H.T)
    if cs.shape[0]:
        cpsi = np.einsum("kij,bj->bki", cs, psi)
        ec = np.einsum("bi,bki->bk", np.conj(psi), cpsi)
        cdc = np.einsum("kji,kjl->il", np.conj(cs), cs)
        drift = (psi @ cdc.T - 2 * np.einsum("bk,bki->bi", np.conj(ec), cpsi)
                 + (np.abs(ec) ** 2).sum(axis=1)[:, None] * psi)
        fl = cpsi - ec[:, :, None] * psi[:, None, :]
        out = out - 0.5 * dt * drift + np.einsum("bki,bk->bi", fl, np.conj(xi))
    if renormalize:
        out = tj.renormalize(out)
    return out


def step_trajectory(model: LindbladModel, psi, dt: float, rng=None, xi=None,
                    renormalize: bool = True) -> np.ndarray:
    """One Euler-Maruyama step for a single state.

    Either pass the increments ``xi`` (shape (K,)) or a random source ``rng``
    for :func:`sample_wiener_increments`.
    """
    psi = np.asarray(psi, dtype=complex)
    if xi is None:
        if rng is None:
            raise ValueError("need either rng or xi")
        xi = sample_wiener_increments(model.u, dt, rng)
    xi = np.asarray(xi, dtype=complex).reshape(1, model.n_ops)
    return _batch_step(model, psi[None], xi, dt, renormalize)[0]


def c_coefficient(model: LindbladModel, psi) -> tc.PairTensor:
    """Quadratic drift coefficient ``C_{mr,pq}`` at a pure state.

    With ``X_k = (c_k - <c_k>) rho`` and ``Y_k = rho (c_k - <c_k>)^dag``,

        C = sum_k (X_k (x) Y_k + Y_k (x) X_k)
            + sum_kl (u_kl^* X_k (x) X_l + u_kl Y_k (x) Y_l).
    """
    psi = np.asarray(psi, dtype=complex)
    f, _ = _fluct(model, psi)
    x = np.einsum("ki,j->kij", f, np.conj(psi))
    y = np.conj(np.swapaxes(x, 1, 2))
    c = (np.einsum("kij,kpq->ijpq", x, y) + np.einsum("kij,kpq->ijpq", y, x)
         + np.einsum("kl,kij,lpq->ijpq", np.conj(model.u), x, x)
         + np.einsum("kl,kij,lpq->ijpq", model.u, y, y))
    return tc.PairTensor(c, tc.CLASSICAL)


def c_coefficient_alt(model: LindbladModel, psi) -> tc.PairTensor:
    """Same coefficient assembled from ``W`` and the two noise correlators:

        C_{mr,pq} = W_mq rho_pr + W_pr rho_mq + [X_k]_mq u_kl^* [X_l]_pr
                    + [Y_k]_pr u_kl [Y_l]_mq.
    """
    psi = np.asarray(psi, dtype=complex)
    rho = _rho(psi)
    w = transition_rate_operator(model, psi)
    f, _ = _fluct(model, psi)
    x = np.einsum("ki,j->kij", f, np.conj(psi))
    y = np.conj(np.swapaxes(x, 1, 2))
    c = (np.einsum("mq,pr->mrpq", w, rho) + np.einsum("pr,mq->mrpq", w, rho)
         + np.einsum("kmq,kl,lpr->mrpq", x, np.conj(model.u), x)
         + np.einsum("kpr,kl,lmq->mrpq", y, model.u, y))
    return tc.PairTensor(c, tc.CLASSICAL)


def insert_slots(base, n: int, items) -> np.ndarray:
    """Order-``n`` product of ``base`` with ``items`` substituted at slots.

    ``items`` maps a tuple of 0-based slots to an array with two axes per
    slot; all other slots carry ``base``.
    """
    out = 0
    for slots, arr in items:
        rest = [k for k in range(n) if k not in slots]
        full = np.asarray(arr)
        for _ in rest:
            full = np.multiply.outer(full, base)
        order = list(slots) + rest
        # full currently lists pairs in `order`; move them to natural position
        inv = [order.index(k) for k in range(n)]
        out = out + tc.permute_pairs(full, inv)
    return out


def hierarchy_drift(model: LindbladModel, psi, n: int) -> tc.PairTensor:
    """Per-state drift of ``rho^{(x) n}``.

    ``sum_l (L rho)_l + sum_{l<m} C_{lm}`` with ``rho`` in all other slots.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    tc.check_budget(model.dim, n, extra_factor=2)
    psi = np.asarray(psi, dtype=complex)
    rho = _rho(psi)
    lr = lindblad_rhs(model, rho)
    items = [((l,), lr) for l in range(n)]
    if n >= 2:
        c = c_coefficient(model, psi).entries
        items += [((l, m), c) for l in range(n) for m in range(l + 1, n)]
    return tc.PairTensor(insert_slots(rho, n, items), tc.CLASSICAL)


def generating_drift(model: LindbladModel, psi, a) -> complex:
    """Per-state drift of ``exp(rho . a)``: ``(a . L rho + 1/2 a . C . a) exp(rho . a)``."""
    psi = np.asarray(psi, dtype=complex)
    a = np.asarray(a, dtype=complex)
    rho = _rho(psi)
    lin = np.sum(a * lindblad_rhs(model, rho))
    quad = np.einsum("mr,mrpq,pq->", a, c_coefficient(model, psi).entries, a)
    return complex((lin + 0.5 * quad) * np.exp(np.sum(a * rho)))


def make_stepper(model: LindbladModel, renormalize: bool = True):
    factor = model._noise_factor

    def step(psi, z, dt):
        if factor.shape[0] == 0:
            xi = np.zeros((psi.shape[0], 0), dtype=complex)
        else:
            xi = increments_from_normals(factor, z, dt)
        return _batch_step(model, psi, xi, dt, renormalize)

    return step


def run_ensemble(model: LindbladModel, psi0, cfg: SdeConfig, n: int, threads: int = 1,
                 stream: str = "ito") -> tj.TensorSeries:
    """Trajectory estimates of ``rho^(k)`` for ``k = 1..n`` on the output grid."""
    tc.check_budget(model.dim, n, extra_factor=3 * tj.GROUPS)
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.ndim == 1:
        psi0 = psi0 / np.linalg.norm(psi0)
    res = tj.simulate(make_stepper(model, cfg.renormalize), psi0, cfg.dt, cfg.steps,
                      cfg.n_traj, cfg.seed, stream, tj.product_observables(n),
                      noise_count=max(2 * model.n_ops, 1), record_every=cfg.record_every,
                      threads=threads)
    return tj.split_orders(res, model.dim, range(1, n + 1))
