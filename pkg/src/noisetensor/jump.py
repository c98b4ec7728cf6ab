"""Jump (piecewise deterministic) unraveling of a Lindblad equation.

Between jumps the state follows ``d psi = A psi dt``; channel ``k`` fires with
rate ``v_k = <(c_k - K_k)^dag (c_k - K_k)>`` and maps ``psi`` to
``(c_k - K_k) psi / sqrt(v_k)``.  The offsets ``K_k`` are either constants
or the state-dependent choice ``K_k = <c_k>`` (``"orthogonal"``), which makes
each post-jump state orthogonal to the pre-jump one.  All offsets give the
same Lindblad average and different higher density tensors.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from . import trajectories as tj
from .ito import SdeConfig, insert_slots, lindblad_rhs
from .linalg import dag, matrix_from_json, matrix_to_json, require_hermitian, require_square

ORTHOGONAL = "orthogonal"
RATE_WARN = 0.1


class JumpImpossible(ValueError):
    """A channel with zero rate was asked for its jump operator."""


class RateTooLarge(ValueError):
    """Total jump probability per step reached one."""


@dataclass(frozen=True, eq=False)
class JumpModel:
    """Hamiltonian, Lindblad operators and jump offsets.

    Parameters
    ----------
    H : array_like, shape (d, d)
    lindblads : array_like, shape (K, d, d)
    offsets : array_like of K complex numbers, or ``"orthogonal"``
    """

    H: np.ndarray
    lindblads: np.ndarray
    offsets: object = ORTHOGONAL

    def __post_init__(self):
        h = require_hermitian(self.H, "H", 1e-12)
        d = h.shape[0]
        cs = np.asarray(self.lindblads, dtype=complex)
        if cs.ndim == 2:
            cs = cs[None]
        if cs.ndim != 3 or cs.shape[1:] != (d, d) or cs.shape[0] == 0:
            raise ValueError(f"lindblads must have shape (K, {d}, {d}) with K >= 1")
        for k, c in enumerate(cs):
            require_square(c, f"lindblads[{k}]", d)
        off = self.offsets
        if isinstance(off, str):
            if off != ORTHOGONAL:
                raise ValueError(f"offsets must be complex numbers or {ORTHOGONAL!r}")
        else:
            off = np.asarray(off, dtype=complex).reshape(-1)
            if off.size != cs.shape[0]:
                raise ValueError(f"{off.size} offsets for {cs.shape[0]} Lindblad operators")
            off.setflags(write=False)
        h.setflags(write=False)
        cs.setflags(write=False)
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "lindblads", cs)
        object.__setattr__(self, "offsets", off)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def n_ops(self) -> int:
        return self.lindblads.shape[0]

    @property
    def orthogonal(self) -> bool:
        return isinstance(self.offsets, str)

    def offsets_at(self, psi) -> np.ndarray:
        """Offsets ``K_k`` evaluated at the state ``psi``."""
        if self.orthogonal:
            return (self.lindblads @ psi) @ np.conj(psi)
        return np.asarray(self.offsets)

    def to_json(self) -> dict:
        off = (self.offsets if self.orthogonal
               else [[float(z.real), float(z.imag)] for z in self.offsets])
        return {"dim": self.dim, "H": matrix_to_json(self.H),
                "lindblads": [matrix_to_json(c) for c in self.lindblads], "offsets": off}

    @classmethod
    def from_json(cls, obj: dict) -> "JumpModel":
        d = int(obj["dim"])
        h = matrix_from_json(obj["H"], "H")
        if h.shape != (d, d):
            raise ValueError(f"H does not match dim={d}")
        cs = np.array([matrix_from_json(c, f"lindblads[{k}]")
                       for k, c in enumerate(obj["lindblads"])])
        off = obj.get("offsets", ORTHOGONAL)
        if not isinstance(off, str):
            arr = np.asarray(off, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ValueError("offsets must be a list of [re, im] pairs")
            off = arr[:, 0] + 1j * arr[:, 1]
        return cls(h, cs, off)


def _shifted(model: JumpModel, psi):
    """``(c_k - K_k) psi``, shape (K, d)."""
    psi = np.asarray(psi, dtype=complex)
    return model.lindblads @ psi - model.offsets_at(psi)[:, None] * psi[None, :]


def jump_rates(model: JumpModel, psi) -> np.ndarray:
    """``v_k = <(c_k - K_k)^dag (c_k - K_k)>``."""
    s = _shifted(model, psi)
    return np.sum(np.abs(s) ** 2, axis=1)


def jump_operators(model: JumpModel, psi, channels=None):
    """Jump operators ``B_k`` and density jumps ``Q_k`` for the given channels.

    ``B_k = (c_k - K_k) / sqrt(v_k) - 1`` and
    ``Q_k = B_k rho + rho B_k^dag + B_k rho B_k^dag``.

    Raises
    ------
    JumpImpossible
        If a requested channel has ``v_k = 0``.
    """
    psi = np.asarray(psi, dtype=complex)
    rho = np.outer(psi, np.conj(psi))
    v = jump_rates(model, psi)
    koff = model.offsets_at(psi)
    eye = np.eye(model.dim)
    channels = range(model.n_ops) if channels is None else channels
    bs, qs = [], []
    for k in channels:
        if v[k] <= 0:
            raise JumpImpossible(f"channel {k} has zero rate at this state")
        b = (model.lindblads[k] - koff[k] * eye) / np.sqrt(v[k]) - eye
        bs.append(b)
        qs.append(b @ rho + rho @ dag(b) + b @ rho @ dag(b))
    return bs, qs


def density_jumps(model: JumpModel, psi):
    """Rates and ``Q_k = (c_k - K_k) rho (c_k - K_k)^dag / v_k - rho``.

    Channels with zero rate get ``Q_k = 0``; they never fire.
    """
    psi = np.asarray(psi, dtype=complex)
    rho = np.outer(psi, np.conj(psi))
    s = _shifted(model, psi)
    v = np.sum(np.abs(s) ** 2, axis=1)
    q = np.zeros((model.n_ops,) + rho.shape, dtype=complex)
    for k in range(model.n_ops):
        if v[k] > 0:
            q[k] = np.outer(s[k], np.conj(s[k])) / v[k] - rho
    return v, q


def drift_operator(model: JumpModel, psi) -> np.ndarray:
    """No-jump generator ``A`` at the state ``psi``.

    ``A = -iH - 1/2 sum c^dag c + 1/2 sum <c^dag c> + sum K^* c
    - 1/2 sum (<c> K^* + <c>^* K)``.
    """
    psi = np.asarray(psi, dtype=complex)
    cs = model.lindblads
    koff = model.offsets_at(psi)
    cpsi = cs @ psi
    ec = cpsi @ np.conj(psi)
    ecdc = np.sum(np.abs(cpsi) ** 2, axis=1)
    cdc = np.einsum("kji,kjl->il", np.conj(cs), cs)
    scalar = 0.5 * ecdc.sum() - 0.5 * np.sum(ec * np.conj(koff) + np.conj(ec) * koff)
    return (-1j * model.H - 0.5 * cdc + np.einsum("k,kij->ij", np.conj(koff), cs)
            + scalar * np.eye(model.dim))


def constraint_residuals(model: JumpModel, psi):
    """``|<A + A^dag>|`` and per-channel ``|<B + B^dag + B^dag B>|``."""
    psi = np.asarray(psi, dtype=complex)
    a = drift_operator(model, psi)
    ra = abs(np.vdot(psi, (a + dag(a)) @ psi))
    v = jump_rates(model, psi)
    live = [k for k in range(model.n_ops) if v[k] > 0]
    bs, _ = jump_operators(model, psi, live)
    rb = [abs(np.vdot(psi, (b + dag(b) + dag(b) @ b) @ psi)) for b in bs]
    return ra, np.array(rb)


def _batch_step(model: JumpModel, psi, u, dt: float):
    """Thinned jump step on a batch; ``u`` holds one uniform per trajectory."""
    cs = model.lindblads
    cpsi = np.einsum("kij,bj->bki", cs, psi)
    ec = np.einsum("bi,bki->bk", np.conj(psi), cpsi)
    koff = ec if model.orthogonal else np.broadcast_to(model.offsets, ec.shape)
    shifted = cpsi - koff[:, :, None] * psi[:, None, :]
    v = np.sum(np.abs(shifted) ** 2, axis=2)
    cum = np.cumsum(v * dt, axis=1)
    total = cum[:, -1]
    worst = float(total.max(initial=0.0))
    if worst >= 1:
        raise RateTooLarge(f"jump probability per step {worst:.3g} >= 1; reduce dt")
    if worst > RATE_WARN:
        warnings.warn(f"jump probability per step {worst:.3g} exceeds {RATE_WARN}",
                      RuntimeWarning, stacklevel=3)
    jumped = u < total
    # first channel whose cumulative probability exceeds u
    chan = np.argmax(cum > u[:, None], axis=1)
    ecdc = np.sum(np.abs(cpsi) ** 2, axis=2)
    scalar = 0.5 * ecdc.sum(axis=1) - np.sum((ec * np.conj(koff)).real, axis=1)
    cdc = np.einsum("kji,kjl->il", np.conj(cs), cs)
    a_psi = (-1j * (psi @ model.H.T) - 0.5 * (psi @ cdc.T)
             + np.einsum("bk,bki->bi", np.conj(koff), cpsi) + scalar[:, None] * psi)
    out = psi + dt * a_psi
    if np.any(jumped):
        idx = np.nonzero(jumped)[0]
        out[idx] = shifted[idx, chan[idx]]
    return tj.renormalize(out)


def step_trajectory(model: JumpModel, psi, dt: float, rng=None, uniform=None) -> np.ndarray:
    """One step for a single state; pass ``uniform`` in [0, 1) or a generator."""
    psi = np.asarray(psi, dtype=complex)
    if uniform is None:
        if rng is None:
            raise ValueError("need either rng or uniform")
        uniform = rng.random() if hasattr(rng, "random") else rng.uniforms(0, 0)[0]
    return _batch_step(model, psi[None], np.array([float(uniform)]), dt)[0]


def hierarchy_drift(model: JumpModel, psi, n: int) -> tc.PairTensor:
    """Per-state drift of ``rho^{(x) n}`` including every product of jumps.

    Since ``dN_k^2 = dN_k``, the increment of the product is
    ``sum_l (L rho)_l + sum_k v_k (rho'_k^{(x) n} - rho^{(x) n} - sum_l (Q_k)_l)``
    with ``rho'_k = rho + Q_k`` the post-jump projector.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    tc.check_budget(model.dim, n, extra_factor=3)
    psi = np.asarray(psi, dtype=complex)
    rho = np.outer(psi, np.conj(psi))
    lr = lindblad_rhs(model, rho)
    out = insert_slots(rho, n, [((l,), lr) for l in range(n)])
    if n == 1:
        return tc.PairTensor(out, tc.CLASSICAL)
    v, q = density_jumps(model, psi)
    base = tc.outer_array([rho] * n)
    for k in range(model.n_ops):
        if v[k] == 0:
            continue
        post = tc.outer_array([rho + q[k]] * n)
        lin = insert_slots(rho, n, [((l,), q[k]) for l in range(n)])
        out = out + v[k] * (post - base - lin)
    return tc.PairTensor(out, tc.CLASSICAL)


def hierarchy_drift_terms(model: JumpModel, psi, n: int) -> tc.PairTensor:
    """Same drift as :func:`hierarchy_drift`, summed term by term over every
    subset of at least two slots that carries a ``Q_k``."""
    psi = np.asarray(psi, dtype=complex)
    rho = np.outer(psi, np.conj(psi))
    out = insert_slots(rho, n, [((l,), lindblad_rhs(model, rho)) for l in range(n)])
    v, q = density_jumps(model, psi)
    for k in range(model.n_ops):
        items = []
        for size in range(2, n + 1):
            for slots in itertools.combinations(range(n), size):
                items.append((slots, tc.outer_array([q[k]] * size)))
        if items:
            out = out + v[k] * insert_slots(rho, n, items)
    return tc.PairTensor(out, tc.CLASSICAL)


def generating_drift(model: JumpModel, psi, a) -> complex:
    """Per-state drift of ``exp(rho . a)``:
    ``(a . L rho + sum_k v_k (exp(a . Q_k) - 1 - a . Q_k)) exp(rho . a)``."""
    psi = np.asarray(psi, dtype=complex)
    a = np.asarray(a, dtype=complex)
    rho = np.outer(psi, np.conj(psi))
    v, q = density_jumps(model, psi)
    aq = np.einsum("ij,kij->k", a, q)
    val = np.sum(a * lindblad_rhs(model, rho)) + np.sum(v * (np.exp(aq) - 1 - aq))
    return complex(val * np.exp(np.sum(a * rho)))


def make_stepper(model: JumpModel):
    def step(psi, draws, dt):
        return _batch_step(model, psi, draws[:, 0], dt)

    return step


def run_ensemble(model: JumpModel, psi0, cfg: SdeConfig, n: int, threads: int = 1,
                 stream: str = "jump") -> tj.TensorSeries:
    """Trajectory estimates of ``rho^(k)`` for ``k = 1..n`` on the output grid."""
    tc.check_budget(model.dim, n, extra_factor=3 * tj.GROUPS)
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.ndim == 1:
        psi0 = psi0 / np.linalg.norm(psi0)
    res = tj.simulate(make_stepper(model), psi0, cfg.dt, cfg.steps, cfg.n_traj, cfg.seed,
                      stream, tj.product_observables(n), noise="uniform",
                      record_every=cfg.record_every, threads=threads)
    return tj.split_orders(res, model.dim, range(1, n + 1))
