"""Reducing and non-reducing real-noise unravelings of pure dephasing.

Both variants use one Lindblad operator with real noise (``u = 1``):
``c = A`` drives every trajectory to an eigenstate of ``A`` while
``c = iA`` only rotates phases and leaves the variance
``V = <A^2> - <A>^2`` of each trajectory constant in mean.  The Lindblad
averages coincide and the order-2 tensors differ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import trajectories as tj
from .ito import LindbladModel, SdeConfig, make_stepper
from .linalg import require_hermitian

REDUCING = "reducing"
NONREDUCING = "nonreducing"
VARIANTS = (REDUCING, NONREDUCING)
EIG_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ReductionExperiment:
    """Observable ``A``, unraveling variant, initial state and time grid."""

    A: np.ndarray
    variant: str
    psi0: np.ndarray
    cfg: SdeConfig

    def __post_init__(self):
        a = require_hermitian(self.A, "A", 1e-12)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        psi = np.asarray(self.psi0, dtype=complex).reshape(-1)
        if psi.size != a.shape[0]:
            raise ValueError("psi0 dimension does not match A")
        nrm = np.linalg.norm(psi)
        if abs(nrm - 1) > 1e-9:
            raise ValueError(f"psi0 has norm {nrm:.12g}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "psi0", psi / nrm)

    def model(self) -> LindbladModel:
        c = self.A if self.variant == REDUCING else 1j * self.A
        return LindbladModel(np.zeros_like(self.A), [c], [[1.0]])


@dataclass
class ReductionSeries:
    """Trajectory averages on the output grid.

    ``group_means`` holds per residue-class means of the raw observables
    ``[V, <A>, predicted rate, rho (d*d), rho (x) rho (d**4)]``.
    """

    times: np.ndarray
    dim: int
    ev: np.ndarray
    ev_se: np.ndarray
    mean_a: np.ndarray
    mean_a_se: np.ndarray
    predicted: np.ndarray
    predicted_se: np.ndarray
    rho1: np.ndarray
    rho1_se: np.ndarray
    rho2: np.ndarray
    rho2_se: np.ndarray
    group_means: np.ndarray
    n_traj: int
    final_states: np.ndarray | None
    variant: str


def variance_rate_integrand(model: LindbladModel, a, psi) -> np.ndarray:
    """Per-state drift of ``V = <A^2> - <A>^2`` for a batch ``psi`` (B, d).

    The linear part comes from the Lindblad term; the quadratic part is
    ``-C(A, A)`` with the C-coefficient of the unraveling contracted against
    ``A`` in both pairs.
    """
    a = np.asarray(a, dtype=complex)
    psi = np.atleast_2d(psi)
    cs = model.lindblads
    cpsi = np.einsum("kij,bj->bki", cs, psi)
    ec = np.einsum("bi,bki->bk", np.conj(psi), cpsi)
    fl = cpsi - ec[:, :, None] * psi[:, None, :]
    apsi = psi @ a.T
    mean_a = np.einsum("bi,bi->b", np.conj(psi), apsi).real
    # x_k = <psi| A dc_k |psi>, y_k = <psi| dc_k^dag A |psi>
    x = np.einsum("bi,bki->bk", np.conj(apsi), fl)
    y = np.conj(x)
    quad = (2 * np.sum(x * y, axis=1)
            + np.einsum("kl,bk,bl->b", np.conj(model.u), x, x)
            + np.einsum("kl,bk,bl->b", model.u, y, y))
    # Lindblad part: Tr(L rho A^2) - 2 <A> Tr(L rho A) via the adjoint generator
    h2, h1 = adjoint_lindblad(model, a @ a), adjoint_lindblad(model, a)
    e2 = np.einsum("bi,ij,bj->b", np.conj(psi), h2, psi).real
    e1 = np.einsum("bi,ij,bj->b", np.conj(psi), h1, psi).real
    return e2 - 2 * mean_a * e1 - quad.real


def adjoint_lindblad(model: LindbladModel, x) -> np.ndarray:
    """Heisenberg-picture generator ``i[H, X] + sum c^dag X c - 1/2 {c^dag c, X}``."""
    out = 1j * (model.H @ x - x @ model.H)
    for c in model.lindblads:
        cd = np.conj(c.T)
        out = out + cd @ x @ c - 0.5 * (cd @ c @ x + x @ cd @ c)
    return out


def _observables(model, a):
    a = np.asarray(a, dtype=complex)
    a2 = a @ a
    prod = tj.product_observables(2)

    def obs(psi):
        apsi = psi @ a.T
        m1 = np.einsum("bi,bi->b", np.conj(psi), apsi).real
        m2 = np.einsum("bi,bi->b", np.conj(psi), psi @ a2.T).real
        pred = variance_rate_integrand(model, a, psi)
        return np.concatenate([(m2 - m1 * m1)[:, None], m1[:, None], pred[:, None],
                               prod(psi)], axis=1)

    return obs


def run_reduction(exp: ReductionExperiment, threads: int = 1, keep_final: bool = False,
                  stream: str | None = None) -> ReductionSeries:
    """Simulate the experiment and collect ``E[V]``, ``E[<A>]``, the
    predicted variance rate and the order-1 and order-2 tensors."""
    model = exp.model()
    cfg = exp.cfg
    d = exp.A.shape[0]
    stream = stream or f"reduce/{exp.variant}"
    res = tj.simulate(make_stepper(model, cfg.renormalize), exp.psi0, cfg.dt, cfg.steps,
                      cfg.n_traj, cfg.seed, stream, _observables(model, exp.A),
                      noise_count=2, record_every=cfg.record_every, threads=threads,
                      keep_final=keep_final)
    t = res.times.size
    m = res.mean
    se = res.stderr_re
    se_im = res.stderr_im
    d2, d4 = d * d, d**4
    rho1 = m[:, 3:3 + d2].reshape(t, d, d)
    rho2 = m[:, 3 + d2:3 + d2 + d4].reshape((t,) + (d,) * 4)
    rho1_se = np.hypot(se[:, 3:3 + d2], se_im[:, 3:3 + d2]).reshape(t, d, d)
    rho2_se = np.hypot(se[:, 3 + d2:], se_im[:, 3 + d2:]).reshape((t,) + (d,) * 4)
    return ReductionSeries(res.times, d, m[:, 0].real, se[:, 0], m[:, 1].real, se[:, 1],
                           m[:, 2].real, se[:, 2], rho1, rho1_se, rho2, rho2_se,
                           res.group_means, res.n_traj, res.final_states, exp.variant)


def variance_rate_check(series: ReductionSeries, t0: float, t1: float):
    """Compare the measured change of ``E[V]`` over ``[t0, t1]`` with the
    window average of the predicted rate.

    The two are paired within each residue class, so their shared noise
    cancels in the standard error.

    Returns
    -------
    measured, predicted, stderr : float
        ``stderr`` is the standard error of ``measured - predicted``.
    """
    times = series.times
    i0 = int(np.argmin(np.abs(times - t0)))
    i1 = int(np.argmin(np.abs(times - t1)))
    if i1 <= i0:
        raise ValueError("window must contain at least one output step")
    h = times[i1] - times[i0]
    gm = series.group_means.real
    meas_g = (gm[i1, :, 0] - gm[i0, :, 0]) / h
    seg = gm[i0:i1 + 1, :, 2]
    pred_g = np.sum(0.5 * (seg[1:] + seg[:-1]) * np.diff(times[i0:i1 + 1])[:, None], axis=0) / h
    diff = meas_g - pred_g
    g = diff.size
    if g < 20:
        raise ValueError("too few trajectory groups for a batch-means error")
    # groups differ in size by at most one trajectory, so plain means suffice
    measured = float(np.mean(meas_g))
    predicted = float(np.mean(pred_g))
    stderr = float(diff.std(ddof=1) / np.sqrt(g))
    return measured, predicted, stderr


def monotone_violation(series: ReductionSeries, every: int) -> float:
    """Largest increase of ``E[V]`` between outputs ``every`` steps apart, in
    units of the paired standard error."""
    gm = series.group_means.real[::every, :, 0]
    if gm.shape[0] < 2:
        return 0.0
    inc = np.diff(gm, axis=0)
    g = inc.shape[1]
    mean = inc.mean(axis=1)
    se = inc.std(axis=1, ddof=1) / np.sqrt(g)
    z = np.where(se > 0, mean / np.where(se > 0, se, 1), np.where(mean > 1e-12, np.inf, 0.0))
    return float(max(z.max(), 0.0))


def spectral_groups(a, tol: float = EIG_TOL):
    """Distinct eigenvalues of ``A`` with orthonormal eigenspace bases."""
    lam, vec = np.linalg.eigh(np.asarray(a, dtype=complex))
    groups = []
    for k, l in enumerate(lam):
        if groups and abs(l - groups[-1][0]) < tol:
            groups[-1][1].append(k)
        else:
            groups.append((l, [k]))
    return [(float(l), vec[:, idx]) for l, idx in groups]


class NotConverged(RuntimeError):
    """Too few trajectories reached an eigenstate."""


def outcome_statistics(exp: ReductionExperiment, threshold: float = 1e-4,
                       min_converged: float = 0.95, threads: int = 1,
                       final_states=None) -> dict:
    """Frequencies of eigenvalue outcomes for the reducing variant.

    A trajectory counts when its final ``V`` is below ``threshold``; its
    outcome is the eigenvalue closest to its final ``<A>``.  Expected
    frequencies are the initial weights ``|<a|psi0>|^2`` summed over each
    eigenspace.
    """
    if exp.variant != REDUCING:
        raise ValueError("outcome statistics need the reducing variant")
    if final_states is None:
        final_states = run_reduction(exp, threads=threads, keep_final=True).final_states
    psi = np.asarray(final_states)
    a = exp.A
    apsi = psi @ a.T
    m1 = np.einsum("bi,bi->b", np.conj(psi), apsi).real
    m2 = np.einsum("bi,bi->b", np.conj(psi), psi @ (a @ a).T).real
    v = m2 - m1 * m1
    ok = v < threshold
    frac = float(ok.mean())
    if frac < min_converged:
        raise NotConverged(f"only {frac:.3f} of trajectories have V < {threshold}")
    groups = spectral_groups(a)
    eig = np.array([g[0] for g in groups])
    nearest = np.argmin(np.abs(m1[ok, None] - eig[None, :]), axis=1)
    counts = np.bincount(nearest, minlength=eig.size)
    n = int(ok.sum())
    freq = counts / n
    expected = np.array([float(np.sum(np.abs(vec.conj().T @ exp.psi0) ** 2)) for _, vec in groups])
    return {"eigenvalues": eig.tolist(), "counts": counts.tolist(), "frequencies": freq.tolist(),
            "stderr": np.sqrt(freq * (1 - freq) / n).tolist(),
            "expected": expected.tolist(), "converged_fraction": frac, "n_counted": n}
