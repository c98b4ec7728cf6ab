"""Batched, deterministic Monte-Carlo driver for pure-state trajectories.

Trajectories are processed in fixed-size batches.  Every random number is
addressed by ``(trajectory id, step, sub-block)`` in a counter-based stream,
so a trajectory's path never depends on batching or on the number of worker
threads.  Observables are accumulated into ``GROUPS`` residue classes
(``trajectory id % GROUPS``); the class means give batch-means standard
errors and make every partial sum independent of scheduling.  Batch results
are merged in batch order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import Stream

GROUPS = 100
BATCH = 4000
STEP_BLOCK = 50

assert BATCH % GROUPS == 0


@dataclass
class SimulationResult:
    """Observable time series with batch-means errors.

    Attributes
    ----------
    times : ndarray, shape (T,)
    mean : ndarray, shape (T, m), complex
    stderr_re, stderr_im : ndarray, shape (T, m)
        Standard errors of the real and imaginary parts.
    group_means : ndarray, shape (T, G, m), complex
        Per residue-class means, for paired comparisons.
    n_traj : int
    final_states : ndarray or None, shape (n_traj, d)
    """

    times: np.ndarray
    mean: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    group_means: np.ndarray
    n_traj: int
    final_states: np.ndarray | None = None


def stderr_of(group_means: np.ndarray):
    """Batch-means standard errors along axis 1 (real and imaginary)."""
    g = group_means.shape[1]
    gm = np.asarray(group_means)
    re = gm.real.std(axis=1, ddof=1) / np.sqrt(g)
    im = gm.imag.std(axis=1, ddof=1) / np.sqrt(g) if np.iscomplexobj(gm) else np.zeros_like(re)
    return re, im


def simulate(step: Callable, psi0, dt: float, steps: int, n_traj: int, seed: int,
             stream: str, observables: Callable, noise: str = "normal",
             noise_count: int = 2, record_every: int = 1, threads: int = 1,
             keep_final: bool = False) -> SimulationResult:
    """Run ``n_traj`` trajectories and average ``observables`` over them.

    Parameters
    ----------
    step : callable
        ``step(psi, draws, dt) -> psi`` acting on a batch ``psi`` of shape
        (B, d).  ``draws`` has shape (B, noise_count) for normal noise or
        (B, 2) for uniform noise.
    psi0 : array_like, shape (d,) or (n_traj, d)
        Common or per-trajectory initial state.
    observables : callable
        ``observables(psi) -> (B, m)`` complex array.
    noise : {"normal", "uniform"}
    record_every : int
        Observables are recorded at step 0 and every ``record_every`` steps;
        ``steps`` must be a multiple of it.
    threads : int
        Worker threads; results do not depend on this value.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps < 0 or n_traj < 2:
        raise ValueError("need steps >= 0 and at least two trajectories")
    if record_every < 1 or steps % record_every:
        raise ValueError("steps must be a multiple of record_every")
    if noise not in ("normal", "uniform"):
        raise ValueError(f"unknown noise kind {noise!r}")
    psi0 = np.asarray(psi0, dtype=complex)
    per_traj = psi0.ndim == 2
    if per_traj and psi0.shape[0] != n_traj:
        raise ValueError("per-trajectory initial states must have n_traj rows")
    rng = Stream(seed, stream)
    n_rec = steps // record_every + 1
    groups = min(GROUPS, n_traj)

    def run_batch(k0):
        k1 = min(k0 + BATCH, n_traj)
        ids = np.arange(k0, k1, dtype=np.uint64)
        psi = (psi0[k0:k1].copy() if per_traj
               else np.broadcast_to(psi0, (k1 - k0, psi0.size)).copy())
        sums = None
        rec = 0

        def record(psi, sums, rec):
            obs = np.asarray(observables(psi), dtype=complex)
            if sums is None:
                sums = np.zeros((n_rec, groups, obs.shape[1]), dtype=complex)
            pad = np.zeros((BATCH, obs.shape[1]), dtype=complex)
            pad[: k1 - k0] = obs
            # k0 is a multiple of BATCH, so row r belongs to class r % GROUPS
            sums[rec] = _fold(pad, groups)
            return sums

        sums = record(psi, sums, rec)
        for s0 in range(0, steps, STEP_BLOCK):
            s1 = min(s0 + STEP_BLOCK, steps)
            svec = np.arange(s0, s1, dtype=np.uint64)
            if noise == "normal":
                block = rng.normals(ids[:, None], svec[None, :], count=noise_count)
            else:
                block = rng.uniforms(ids[:, None], svec[None, :])
            for j, s in enumerate(range(s0, s1)):
                psi = step(psi, block[:, j], dt)
                if (s + 1) % record_every == 0:
                    rec += 1
                    sums = record(psi, sums, rec)
        return sums, (psi if keep_final else None)

    starts = range(0, n_traj, BATCH)
    total = None
    finals = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(run_batch, starts)
            total, finals = _merge(results, keep_final)
    else:
        total, finals = _merge(map(run_batch, starts), keep_final)

    counts = np.bincount(np.arange(n_traj) % GROUPS, minlength=GROUPS)[:groups]
    group_means = total / counts[None, :, None]
    mean = total.sum(axis=1) / n_traj
    se_re, se_im = stderr_of(group_means)
    return SimulationResult(times=dt * record_every * np.arange(n_rec), mean=mean,
                            stderr_re=se_re, stderr_im=se_im, group_means=group_means,
                            n_traj=n_traj,
                            final_states=np.concatenate(finals) if keep_final else None)


def _fold(rows: np.ndarray, groups: int) -> np.ndarray:
    folded = rows.reshape(BATCH // GROUPS, GROUPS, rows.shape[1]).sum(axis=0)
    if groups < GROUPS:
        # only happens when n_traj < GROUPS, i.e. a single partial batch
        folded = folded[:groups]
    return folded


def _merge(results, keep_final):
    total = None
    finals = []
    for sums, fin in results:
        total = sums if total is None else total + sums
        if keep_final:
            finals.append(fin)
    return total, finals


def renormalize(psi: np.ndarray) -> np.ndarray:
    return psi / np.linalg.norm(psi, axis=-1, keepdims=True)


def product_observables(n: int, orders=None) -> Callable:
    """Observable map returning flattened ``rho^{(x) k}`` for each order k.

    The default records every order from 1 to ``n``.
    """
    orders = list(range(1, n + 1)) if orders is None else list(orders)

    def obs(psi):
        b, d = psi.shape
        rho = (psi[:, :, None] * np.conj(psi[:, None, :])).reshape(b, d * d)
        out = []
        cur = rho
        for k in range(1, max(orders) + 1):
            if k > 1:
                cur = (cur[:, :, None] * rho[:, None, :]).reshape(b, -1)
            if k in orders:
                out.append(cur)
        return np.concatenate(out, axis=1)

    return obs


@dataclass
class TensorSeries:
    """Per-order tensor estimates along a trajectory average.

    ``estimates[k]`` has shape ``(T,) + (d,) * 2k``; ``stderr_re[k]`` and
    ``stderr_im[k]`` match it.
    """

    times: np.ndarray
    dim: int
    estimates: dict
    stderr_re: dict
    stderr_im: dict
    group_means: dict
    n_traj: int

    def tensor(self, k: int, t_index: int):
        from .tensor import CLASSICAL, PairTensor
        return PairTensor(self.estimates[k][t_index], CLASSICAL)


def split_orders(result: SimulationResult, dim: int, orders) -> TensorSeries:
    est, sre, sim, gm = {}, {}, {}, {}
    col = 0
    for k in orders:
        size = dim ** (2 * k)
        shape = (dim,) * (2 * k)
        sl = slice(col, col + size)
        t = result.mean.shape[0]
        est[k] = result.mean[:, sl].reshape((t,) + shape)
        sre[k] = result.stderr_re[:, sl].reshape((t,) + shape)
        sim[k] = result.stderr_im[:, sl].reshape((t,) + shape)
        gm[k] = result.group_means[:, :, sl]
        col += size
    return TensorSeries(result.times, dim, est, sre, sim, gm, result.n_traj)
