"""Command-line front door: ``noisetensor <subcommand> --input cfg.json --out dir``.

Exit status is 0 when every check passes, 1 on a failed check, 2 on a
configuration error and 3 when a tensor would exceed the memory budget.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import tensor as tc
from .checks import Report
from .io import complex_columns, complex_values, write_csv, write_json
from .linalg import matrix_from_json, random_state, vector_from_json

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
SUBCOMMANDS = ("ensemble", "spin", "ito", "jump", "qtensor", "master", "collisional",
               "reduce", "check-descent")


class ConfigError(ValueError):
    """Bad configuration; the message names the offending field."""


_MISSING = object()


class Fields:
    """Dotted-path accessor over a JSON object with typed lookups."""

    def __init__(self, data, path: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or '<root>'}: expected an object")
        self.data = data
        self.path = path

    def _name(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key) -> bool:
        return key in self.data

    def raw(self, key, default=_MISSING):
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(f"field '{self._name(key)}': missing")
            return default
        return self.data[key]

    def sub(self, key) -> "Fields":
        return Fields(self.raw(key), self._name(key))

    def num(self, key, default=_MISSING, kind=float):
        val = self.raw(key, default)
        if val is None and default is None:
            return None
        try:
            if isinstance(val, bool):
                raise TypeError
            out = kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"field '{self._name(key)}': expected {kind.__name__}, got {val!r}")
        return out

    def matrix(self, key, default=_MISSING):
        val = self.raw(key, default)
        if val is default and default is not _MISSING:
            return default
        try:
            return matrix_from_json(val, self._name(key))
        except ValueError as exc:
            raise ConfigError(f"field '{self._name(key)}': {exc}")

    def vector(self, key, default=_MISSING):
        val = self.raw(key, default)
        if val is default and default is not _MISSING:
            return default
        try:
            return vector_from_json(val, self._name(key))
        except ValueError as exc:
            raise ConfigError(f"field '{self._name(key)}': {exc}")


def load_config(path: str) -> Fields:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return Fields(data)


def _seed(args, cfg: Fields) -> int:
    if args.seed is not None:
        return args.seed
    if cfg.has("seed"):
        return cfg.num("seed", kind=int)
    raise ConfigError("field 'seed': required for this subcommand (use --seed)")


def _order(args, cfg: Fields, default: int) -> int:
    n = args.n if args.n is not None else cfg.num("n", default, int)
    if n < 1:
        raise ConfigError("field 'n': must be >= 1")
    return n


def _tol(args, default: float) -> float:
    return args.tolerance if args.tolerance is not None else default


def _sde(args, cfg: Fields, seed: int):
    from .ito import SdeConfig
    s = cfg.sub("sde")
    dt = args.dt if args.dt is not None else s.num("dt")
    traj = args.traj if args.traj is not None else s.num("n_traj", kind=int)
    try:
        return SdeConfig(dt=dt, steps=s.num("steps", kind=int), n_traj=traj, seed=seed,
                         renormalize=bool(s.raw("renormalize", True)),
                         record_every=s.num("record_every", 1, int))
    except ValueError as exc:
        raise ConfigError(f"field 'sde': {exc}")


def _state(cfg: Fields, key: str, dim: int):
    psi = cfg.vector(key)
    if psi.size != dim:
        raise ConfigError(f"field '{key}': length {psi.size}, expected {dim}")
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1) > 1e-9:
        raise ConfigError(f"field '{key}': norm {nrm:.12g} is not 1")
    return psi / nrm


# -- shared checks ----------------------------------------------------------


def _descent_checks(report: Report, module: str, tensors: dict, tol: float, adjacent_only=False):
    """Trace and chain descent of each order against the next lower one."""
    for k in sorted(tensors):
        if k < 2 or k - 1 not in tensors:
            continue
        t, lo = tensors[k], tensors[k - 1].entries
        tr = max(tc.max_abs(tc.contract_trace(t, s).entries - lo) for s in range(1, k + 1))
        if t.flavor == tc.CLASSICAL and not adjacent_only:
            pairs = [(a, b) for a in range(1, k + 1) for b in range(1, k + 1) if a != b]
        else:
            pairs = [(a, a % k + 1) for a in range(1, k + 1)]
        ch = max(tc.max_abs(tc.contract_chain(t, a, b).entries - lo) for a, b in pairs)
        if t.flavor == tc.CLASSICAL:
            report.add(f"trace descent n={k}", module, "trace contraction descent", tr, tol)
        report.add(f"chain descent n={k}", module, "chain contraction descent", ch, tol)


def _tensor_rows(tensors: dict):
    rows = []
    for k in sorted(tensors):
        for idx in np.ndindex(*tensors[k].entries.shape):
            z = tensors[k].entries[idx]
            rows.append([k, "".join(str(i) for i in idx), z.real, z.imag])
    return rows


def _write_tensors(out, tensors: dict, name="tensors"):
    write_json(os.path.join(out, f"{name}.json"),
               {str(k): tc.to_json(t) for k, t in sorted(tensors.items())})
    write_csv(os.path.join(out, f"{name}.csv"), ["order", "index", "re", "im"],
              [[str(r[0]), r[1], r[2], r[3]] for r in _tensor_rows(tensors)])


# -- subcommands ------------------------------------------------------------


def cmd_ensemble(args, cfg: Fields, report: Report):
    from .ensemble import WeightedEnsemble, density_tensor, variance_decomposition
    try:
        ens = WeightedEnsemble.from_json(cfg.raw("ensemble"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field 'ensemble': {exc}")
    n = _order(args, cfg, 3)
    tol = _tol(args, 1e-10)
    tensors = {k: density_tensor(ens, k) for k in range(1, n + 1)}
    _write_tensors(args.out, tensors)
    _descent_checks(report, "classical-ensemble", tensors, tol)
    for k, t in tensors.items():
        report.add(f"pair symmetry n={k}", "classical-ensemble", "permutation symmetry",
                   tc.symmetry_defect(t), tol)
        report.add(f"hermiticity n={k}", "classical-ensemble", "hermiticity", tc.hermiticity_defect(t), tol)
    if cfg.has("observable"):
        r = cfg.matrix("observable")
        var, v1, v2 = variance_decomposition(ens, r)
        report.add("variance split", "classical-ensemble", "variance decomposition",
                   abs(var - v1 - v2), tol)
        report.add("in-state variance nonnegative", "classical-ensemble", "variance decomposition",
                   max(0.0, -v1), tol)
        report.add("ensemble variance nonnegative", "classical-ensemble", "variance decomposition",
                   max(0.0, -v2), tol)
        write_json(os.path.join(args.out, "variance.json"), {"var": var, "var1": v1, "var2": v2})


def cmd_spin(args, cfg: Fields, report: Report):
    from .ensemble import density_tensor_batches
    from .spin import analytic_tensor, bloch_states, sphere_vectors
    seed = _seed(args, cfg)
    n = _order(args, cfg, 3)
    if n > 3:
        raise ConfigError("field 'n': closed forms exist for n <= 3")
    samples = args.traj if args.traj is not None else cfg.num("samples", 100000, int)
    batches = cfg.num("batches", 100, int)
    z_max = cfg.num("z_max", 3.0)
    tol = _tol(args, 1e-12)
    states = bloch_states(sphere_vectors(samples, seed))
    analytic = {k: analytic_tensor(k) for k in range(1, n + 1)}
    _descent_checks(report, "spin-isotropic", analytic, tol)
    rows = []
    for k in range(1, n + 1):
        mean, se_re, se_im = density_tensor_batches(states, k, batches)
        exact = analytic[k].entries
        z = np.maximum(_z(mean.real - exact.real, se_re), _z(mean.imag - exact.imag, se_im))
        report.add(f"sample vs closed form n={k}", "spin-isotropic",
                   "isotropic closed form (max z)", float(z.max()), z_max)
        for idx in np.ndindex(*exact.shape):
            rows.append([str(k), "".join(map(str, idx)), exact[idx].real, exact[idx].imag,
                         mean[idx].real, mean[idx].imag, se_re[idx], se_im[idx], z[idx]])
    write_csv(os.path.join(args.out, "spin.csv"),
              ["order", "index", "exact_re", "exact_im", "mc_re", "mc_im", "se_re", "se_im", "z"],
              rows)


def _z(diff, se, floor: float = 1e-15):
    """``|diff| / se``; entries with zero spread compare against ``floor``."""
    diff = np.abs(diff)
    return np.where(se > 0, diff / np.where(se > 0, se, 1), diff / floor)


def _series_csv(path, series, orders):
    header = ["t"]
    for k in orders:
        shape = (series.dim,) * (2 * k)
        header += complex_columns(f"rho{k}", shape)
    for k in orders:
        header += [c.replace(".re", ".se_re").replace(".im", ".se_im")
                   for c in complex_columns(f"rho{k}", (series.dim,) * (2 * k))]
    rows = []
    for ti, t in enumerate(series.times):
        row = [t]
        for k in orders:
            row += list(complex_values(series.estimates[k][ti]))
        for k in orders:
            se = np.stack([series.stderr_re[k][ti].reshape(-1), series.stderr_im[k][ti].reshape(-1)],
                          axis=1).reshape(-1)
            row += list(se)
        rows.append(row)
    write_csv(path, header, rows)


def _estimate_checks(report, module, series, n, tol):
    worst_tr = max(abs(np.trace(series.estimates[1][ti]) - 1) for ti in range(series.times.size))
    report.add("estimate unit trace", module, "trace preservation", worst_tr, tol)
    worst = 0.0
    for ti in range(series.times.size):
        ts = {k: series.tensor(k, ti) for k in range(1, n + 1)}
        for k in range(2, n + 1):
            lo = ts[k - 1].entries
            worst = max(worst, max(tc.max_abs(tc.contract_trace(ts[k], s).entries - lo)
                                   for s in range(1, k + 1)),
                        max(tc.max_abs(tc.contract_chain(ts[k], s, s % k + 1).entries - lo)
                            for s in range(1, k + 1)))
    if n >= 2:
        report.add("estimate descent", module, "descent of trajectory averages", worst, tol)


def cmd_ito(args, cfg: Fields, report: Report):
    from . import ito
    seed = _seed(args, cfg)
    try:
        model = ito.LindbladModel.from_json(cfg.raw("model"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"field 'model': {exc}")
    except ValueError as exc:
        raise ConfigError(f"field 'model': {exc}")
    psi0 = _state(cfg, "psi0", model.dim)
    sde = _sde(args, cfg, seed)
    n = _order(args, cfg, 2)
    tol = _tol(args, 1e-10)
    series = ito.run_ensemble(model, psi0, sde, n, threads=args.threads)
    _series_csv(os.path.join(args.out, "series.csv"), series, range(1, n + 1))
    _estimate_checks(report, "ito-unraveling", series, n, tol)
    w1 = ito.transition_rate_operator(model, psi0)
    w2 = ito.transition_rate_operator_lindblad_form(model, psi0)
    report.add("rate operator forms agree", "ito-unraveling", "transition rate operator",
               tc.max_abs(w1 - w2), tol)
    c1, c2 = ito.c_coefficient(model, psi0), ito.c_coefficient_alt(model, psi0)
    report.add("C coefficient forms agree", "ito-unraveling", "quadratic drift coefficient",
               tc.max_abs(c1.entries - c2.entries), tol)
    drifts = {k: ito.hierarchy_drift(model, psi0, k) for k in range(1, max(n, 2) + 1)}
    _descent_checks(report, "ito-unraveling", drifts, tol)


def cmd_jump(args, cfg: Fields, report: Report):
    from . import ito, jump
    seed = _seed(args, cfg)
    try:
        model = jump.JumpModel.from_json(cfg.raw("model"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field 'model': {exc}")
    psi0 = _state(cfg, "psi0", model.dim)
    sde = _sde(args, cfg, seed)
    n = _order(args, cfg, 2)
    tol = _tol(args, 1e-10)
    series = jump.run_ensemble(model, psi0, sde, n, threads=args.threads)
    _series_csv(os.path.join(args.out, "series.csv"), series, range(1, n + 1))
    _estimate_checks(report, "jump-unraveling", series, n, tol)
    rho = np.outer(psi0, np.conj(psi0))
    v, q = jump.density_jumps(model, psi0)
    lr = ito.lindblad_rhs(model, rho)
    lhs = rho @ lr + lr @ rho
    rhs = lr - sum(v[k] * q[k] @ q[k] for k in range(model.n_ops))
    report.add("anticommutator identity for L rho", "jump-unraveling", "jump descent identities",
               tc.max_abs(lhs - rhs), tol)
    worst = max(tc.max_abs(rho @ q[k] + q[k] @ rho - (q[k] - q[k] @ q[k])) for k in range(model.n_ops))
    report.add("anticommutator identity for Q", "jump-unraveling", "jump descent identities", worst, tol)
    ra, rb = jump.constraint_residuals(model, psi0)
    report.add("drift constraint", "jump-unraveling", "norm constraints", ra, tol)
    report.add("jump constraint", "jump-unraveling", "norm constraints", float(np.max(rb, initial=0.0)), tol)
    drifts = {k: jump.hierarchy_drift(model, psi0, k) for k in range(1, max(n, 2) + 1)}
    _descent_checks(report, "jump-unraveling", drifts, tol)


def _bipartite(cfg: Fields, key="state"):
    from .quantum import BipartiteState
    s = cfg.sub(key)
    try:
        if s.has("psi"):
            de, ds = s.num("dE", kind=int), s.num("dS", kind=int)
            return BipartiteState.from_vector(s.vector("psi"), de, ds)
        return BipartiteState.from_json(s.data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field '{key}': {exc}")


def cmd_qtensor(args, cfg: Fields, report: Report):
    from . import quantum
    state = _bipartite(cfg)
    n = _order(args, cfg, 3)
    tol = _tol(args, 1e-12)
    tensors = {k: quantum.trace_tensor(state, k) for k in range(1, n + 1)}
    _write_tensors(args.out, tensors)
    pure = abs(np.trace(state.rho @ state.rho).real - 1) <= 1e-10
    if pure:
        _descent_checks(report, "quantum-tensor", tensors, tol)
    for k, t in tensors.items():
        report.add(f"cyclic symmetry n={k}", "quantum-tensor", "cyclic symmetry", tc.symmetry_defect(t), tol)
    report.add("order-1 is reduced state", "quantum-tensor", "partial trace",
               tc.max_abs(tensors[1].entries - state.sys_marginal()), tol)
    if n >= 3:
        sym, anti = tc.symmetric_antisymmetric_split(tensors[3])
        report.add("symmetric plus antisymmetric", "quantum-tensor", "order-3 split",
                   tc.max_abs(sym.entries + anti.entries - tensors[3].entries), tol)
    if cfg.has("observable"):
        a = cfg.matrix("observable")
        lhs = quantum.environment_fluctuation(state, a)
        rhs = quantum.fluctuation_from_tensors(state, a)
        report.add("environment fluctuation from tensors", "quantum-tensor",
                   "environment fluctuation", abs(lhs - rhs), max(tol, 1e-10))
        write_json(os.path.join(args.out, "fluctuation.json"), {"direct": lhs, "from_tensors": rhs})


def _master_generator(cfg: Fields):
    from . import master as ms
    kind = cfg.raw("kind")
    try:
        if kind == "two-level":
            beta = _beta(cfg)
            spec, w0 = ms.two_level_decay_spec(cfg.num("gamma0", 1.0), beta)
            return (lambda r, n: ms.born_markov_generator(spec, r, n)), 2, spec
        if kind in ("born-markov", "quantum-optical"):
            om = np.asarray(cfg.raw("omegas"), dtype=float)
            ops = np.array([[matrix_from_json(a, "ops") for a in row] for row in cfg.raw("ops")])
            if kind == "born-markov":
                gam = np.array([matrix_from_json(g, "gamma") for g in cfg.raw("gamma")])
                lamb = (np.array([matrix_from_json(g, "lamb") for g in cfg.raw("lamb")])
                        if cfg.has("lamb") else None)
                spec = ms.BornMarkovSpec(om, ops, gam, lamb)
            else:
                spec = ms.quantum_optical_spec(om, ops, _beta(cfg))
            return (lambda r, n: ms.born_markov_generator(spec, r, n)), spec.dim, spec
        if kind == "caldeira-leggett":
            spec = ms.CaldeiraLeggettSpec(cfg.num("mass"), cfg.num("gamma"), cfg.num("kT"),
                                          cfg.num("dim", kind=int), cfg.num("omega0", 1.0),
                                          bool(cfg.raw("free_hamiltonian", False)))
            return (lambda r, n: ms.caldeira_leggett_generator(spec, r, n)), spec.dim, spec
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"master spec ({kind}): {exc}")
    raise ConfigError(f"field 'kind': unknown generator {kind!r}")


def _beta(cfg: Fields) -> float:
    raw = cfg.raw("beta", None)
    if raw is None or raw == "inf":
        return math.inf
    return cfg.num("beta")


def cmd_master(args, cfg: Fields, report: Report):
    from . import master as ms
    from .linalg import random_density
    gen, d, spec = _master_generator(cfg)
    n = _order(args, cfg, 2)
    tol = _tol(args, 1e-10)
    if cfg.has("rho1"):
        rho1 = cfg.matrix("rho1")
        if rho1.shape != (d, d):
            raise ConfigError(f"field 'rho1': expected {d}x{d}")
    elif cfg.raw("kind") == "two-level":
        rho1 = np.diag([0.0, 1.0]).astype(complex)
    else:
        raise ConfigError("field 'rho1': missing")
    t_grid = np.asarray(cfg.raw("t_grid", [0.0, 1.0]), dtype=float)
    dt = args.dt if args.dt is not None else cfg.num("dt", 1e-3)
    # descent of the generator itself, at the configured state and a seeded random one
    states = [rho1]
    if cfg.has("seed") or args.seed is not None:
        states.append(random_density(np.random.default_rng(_seed(args, cfg)), d))
    worst = 0.0
    for r in states:
        for k in range(2, max(n, 2) + 1):
            g = gen(r, k)
            lower = gen(np.array([r @ r] + [r] * (k - 2)), k - 1).entries
            worst = max(worst, tc.max_abs(tc.contract_chain(g, 1, 2).entries - lower))
    report.add("generator descent", "master-hierarchies", "generator descent identity", worst, tol)
    series = ms.integrate_hierarchy(gen, rho1, tc.power(rho1, n).entries, t_grid, dt, n=n)
    tr = max(abs(np.trace(r) - 1) for r in series.rho1)
    herm = max(tc.max_abs(r - r.conj().T) for r in series.rho1)
    report.add("trace preserved", "master-hierarchies", "trace preservation", tr, 1e-8)
    report.add("hermiticity preserved", "master-hierarchies", "hermiticity", herm, 1e-8)
    if series.descent_residual is not None:
        report.add("integrated descent", "master-hierarchies", "descent under integration",
                   float(series.descent_residual.max()), 1e-8)
    report.add("step-halving error", "master-hierarchies", "RK4 error estimate",
               series.error_estimate, 1e-6)
    if cfg.raw("kind") == "two-level" and math.isinf(_beta(cfg)):
        g0 = cfg.num("gamma0", 1.0)
        err = float(np.max(np.abs(series.rho1[:, 1, 1].real - np.exp(-g0 * series.times))))
        report.add("excited population decay", "master-hierarchies", "two-level decay", err, 1e-6)
    header = ["t"] + complex_columns("rho1", (d, d)) + complex_columns(f"rho{n}", (d,) * (2 * n))
    rows = [[t] + list(complex_values(series.rho1[i])) + list(complex_values(series.rhon[i]))
            for i, t in enumerate(series.times)]
    write_csv(os.path.join(args.out, "series.csv"), header, rows)


def cmd_collisional(args, cfg: Fields, report: Report):
    from . import collisional as co
    from .ensemble import WeightedEnsemble, density_tensor
    from .rng import Stream
    s = cfg.sub("scatterer")
    scatter = co.Scatterer(s.num("density"), s.num("mass"), co.gaussian_mu(s.num("k_th")),
                           s.num("f0", 1.0))
    grid = np.asarray(cfg.raw("grid"), dtype=float)
    q = cfg.sub("quadrature") if cfg.has("quadrature") else Fields({}, "quadrature")
    quad = co.Quadrature(q.num("n_radial", 64, int), q.num("n_theta", 32, int),
                         q.num("n_phi", 32, int), q.num("k_max", 8 * s.num("k_th")))
    n = _order(args, cfg, 3)
    times = [float(t) for t in cfg.raw("times", [0.0, 0.5, 1.0])]
    tol = _tol(args, 1e-12)
    try:
        table = co.kernel_table(scatter, grid, quad)
        pts = co._as_points(grid)
        f0 = co.collisional_kernel(scatter, np.zeros((1, 3)), quad)[0]
        doubled = co.kernel_table(scatter, grid, quad.doubled())
    except ValueError as exc:
        raise ConfigError(f"field 'scatterer': {exc}")
    scale = max(tc.max_abs(table), 1.0)
    report.add("kernel vanishes at zero", "master-hierarchies", "collisional kernel", abs(f0) / scale, 1e-12)
    report.add("kernel real part nonnegative", "master-hierarchies", "collisional kernel",
               max(0.0, -float(table.real.min())) / scale, 1e-12)
    report.add("quadrature self-convergence", "master-hierarchies", "collisional kernel",
               tc.max_abs(doubled - table) / scale, 1e-6)
    rows = []
    for a in range(len(pts)):
        for b in range(len(pts)):
            r = pts[a] - pts[b]
            rows.append([str(a), str(b), r[0], r[1], r[2], table[a, b].real, table[a, b].imag])
    write_csv(os.path.join(args.out, "kernel.csv"),
              ["a", "b", "Rx", "Ry", "Rz", "F_re", "F_im"], rows)
    p = len(pts)
    if cfg.has("ensemble"):
        ens = WeightedEnsemble.from_json(cfg.raw("ensemble"))
    else:
        seed = _seed(args, cfg)
        m = cfg.num("members", 4, int)
        z = Stream(seed, "collisional/members").normals(np.arange(m, dtype=np.uint64), 0, count=2 * p)
        psi = z[:, :p] + 1j * z[:, p:]
        ens = WeightedEnsemble.uniform(psi / np.linalg.norm(psi, axis=1, keepdims=True))
    if ens.dim != p:
        raise ConfigError(f"field 'ensemble': dimension {ens.dim} does not match grid of {p}")
    init = {k: density_tensor(ens, k) for k in range(1, n + 1)}
    worst = 0.0
    snapshots = {}
    for t in times:
        ev = {k: co.collisional_evolve(init[k], table, t) for k in init}
        snapshots[f"{t:.17g}"] = {str(k): tc.to_json(v) for k, v in ev.items()}
        for k in range(2, n + 1):
            worst = max(worst, tc.max_abs(tc.contract_chain(ev[k], 1, 2).entries - ev[k - 1].entries))
    report.add("evolved descent", "master-hierarchies", "collisional descent", worst, tol)
    e2 = co.evolution_exponent(table, 2)
    report.add("order-2 exponent pair swap", "master-hierarchies", "collisional symmetry",
               tc.max_abs(e2 - tc.permute_pairs(e2, [1, 0])) / scale, tol)
    fs, fa = co.symmetric_antisymmetric_exponent(table)
    e3 = co.evolution_exponent(table, 3)
    sym = max(tc.max_abs(tc.permute_pairs(fs, pm) - fs) for pm in [(1, 0, 2), (2, 1, 0), (0, 2, 1)])
    anti = max(tc.max_abs(tc.permute_pairs(fa, pm) + fa) for pm in [(1, 0, 2), (2, 1, 0), (0, 2, 1)])
    report.add("order-3 split sums back", "master-hierarchies", "collisional symmetry",
               tc.max_abs(fs + fa - e3) / scale, tol)
    report.add("order-3 symmetric part", "master-hierarchies", "collisional symmetry", sym / scale, tol)
    report.add("order-3 antisymmetric part", "master-hierarchies", "collisional symmetry", anti / scale, tol)
    write_json(os.path.join(args.out, "evolved.json"), snapshots)


def cmd_reduce(args, cfg: Fields, report: Report):
    from . import reduction as rd
    seed = _seed(args, cfg)
    a = cfg.matrix("A")
    variant = args.variant or cfg.raw("variant", rd.REDUCING)
    psi0 = _state(cfg, "psi0", a.shape[0])
    sde = _sde(args, cfg, seed)
    try:
        exp = rd.ReductionExperiment(a, variant, psi0, sde)
    except ValueError as exc:
        raise ConfigError(str(exc))
    want_outcomes = bool(cfg.raw("outcomes", False)) and variant == rd.REDUCING
    series = rd.run_reduction(exp, threads=args.threads, keep_final=want_outcomes)
    rows = [[t, series.ev[i], series.ev_se[i], series.mean_a[i], series.mean_a_se[i],
             series.predicted[i], series.predicted_se[i]] for i, t in enumerate(series.times)]
    write_csv(os.path.join(args.out, "reduction.csv"),
              ["t", "EV", "EV_se", "EA", "EA_se", "rate_pred", "rate_pred_se"], rows)
    mod = "reduction-lab"
    v0 = series.ev[0]
    drift_a = np.abs(series.mean_a - series.mean_a[0]) / np.maximum(3 * series.mean_a_se, 1e-12)
    report.add("mean of A conserved", mod, "martingale property", float(drift_a.max()), 1.0)
    if variant == rd.NONREDUCING:
        flat = np.abs(series.ev - v0) / np.maximum(3 * series.ev_se, 1e-12)
        report.add("E[V] flat", mod, "non-reducing variance", float(flat.max()), 1.0)
    else:
        report.add("E[V] nonincreasing", mod, "reducing variance",
                   rd.monotone_violation(series, cfg.num("monotone_every", 10, int)), 3.0)
        for w in cfg.raw("windows", []):
            meas, pred, se = rd.variance_rate_check(series, float(w[0]), float(w[1]))
            z = abs(meas - pred) / se if se > 0 else (0.0 if abs(meas - pred) < 1e-12 else math.inf)
            report.add(f"variance rate on [{w[0]}, {w[1]}]", mod, "variance rate law", z, 4.0)
    if want_outcomes:
        stats = rd.outcome_statistics(exp, cfg.num("threshold", 1e-4),
                                      cfg.num("min_converged", 0.95), final_states=series.final_states)
        write_json(os.path.join(args.out, "outcomes.json"), stats)
        f, e, se = map(np.asarray, (stats["frequencies"], stats["expected"], stats["stderr"]))
        z = np.abs(f - e) / np.maximum(se, 1e-12)
        report.add("outcome frequencies", mod, "initial-state weights", float(z.max()), 4.0)


def cmd_check_descent(args, cfg: Fields, report: Report):
    # a plain spin config carries no kind and checks the closed forms
    kind = cfg.raw("kind", "spin-analytic")
    n = _order(args, cfg, 3)
    tol = _tol(args, 1e-12)
    if kind == "spin-analytic":
        from .spin import analytic_tensor
        if n > 3:
            raise ConfigError("field 'n': closed forms exist for n <= 3")
        tensors = {k: analytic_tensor(k) for k in range(1, n + 1)}
        module = "spin-isotropic"
    elif kind == "ensemble":
        from .ensemble import WeightedEnsemble, density_tensor
        try:
            ens = WeightedEnsemble.from_json(cfg.raw("ensemble"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"field 'ensemble': {exc}")
        tensors = {k: density_tensor(ens, k) for k in range(1, n + 1)}
        module = "classical-ensemble"
    elif kind == "bipartite":
        from .quantum import trace_tensor
        state = _bipartite(cfg)
        tensors = {k: trace_tensor(state, k) for k in range(1, n + 1)}
        module = "quantum-tensor"
    else:
        raise ConfigError(f"field 'kind': unknown kind {kind!r}")
    _descent_checks(report, module, tensors, tol)
    _write_tensors(args.out, tensors)


COMMANDS = {"ensemble": cmd_ensemble, "spin": cmd_spin, "ito": cmd_ito, "jump": cmd_jump,
            "qtensor": cmd_qtensor, "master": cmd_master, "collisional": cmd_collisional,
            "reduce": cmd_reduce, "check-descent": cmd_check_descent}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noisetensor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--input", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed for every random stream")
        p.add_argument("--n", type=int, help="tensor order")
        p.add_argument("--dt", type=float, help="time step override")
        p.add_argument("--traj", type=int, help="trajectory or sample count override")
        p.add_argument("--tolerance", type=float, help="tolerance for identity checks")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        if name == "reduce":
            p.add_argument("--variant", choices=("reducing", "nonreducing"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("noisetensor: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    report = Report()
    try:
        cfg = load_config(args.input)
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](args, cfg, report)
    except ConfigError as exc:
        print(f"noisetensor: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except tc.BudgetExceeded as exc:
        print(f"noisetensor: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    write_json(os.path.join(args.out, "checks.json"), report.to_json())
    failed = [c for c in report.items if not c.passed]
    for c in report.items:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.module}: {c.check}  "
              f"value={c.value:.3g} tol={c.tolerance:.3g}")
    return EXIT_CHECK if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
