"""Pair-indexed density tensors.

An order-``n`` tensor over a ``d``-dimensional space is stored densely as a
complex array of shape ``(d,) * 2n``.  Pair ``l`` (1-based) occupies axes
``2l - 2`` (row index ``i_l``) and ``2l - 1`` (column index ``j_l``).

Two flavors exist.  ``classical`` tensors are ensemble averages of products of
commuting numbers and are symmetric under any permutation of pairs.
``quantum`` tensors are environment traces of non-commuting blocks and are
only symmetric under cyclic permutations of pairs.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass

import numpy as np

CLASSICAL = "classical"
QUANTUM = "quantum"
FLAVORS = (CLASSICAL, QUANTUM)

DEFAULT_TOL = 1e-10
DEFAULT_BUDGET_MB = 1024.0


class BudgetExceeded(MemoryError):
    """Raised when a dense tensor would exceed the configured memory cap."""


def budget_mb() -> float:
    """Memory cap in MB, read from ``NOISETENSOR_BUDGET_MB``."""
    raw = os.environ.get("NOISETENSOR_BUDGET_MB")
    if raw is None:
        return DEFAULT_BUDGET_MB
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"NOISETENSOR_BUDGET_MB is not a number: {raw!r}")


def check_budget(dim: int, order: int, extra_factor: float = 1.0) -> None:
    """Raise :class:`BudgetExceeded` if ``dim**(2*order)`` complex entries
    (times ``extra_factor``) do not fit the memory cap."""
    nbytes = 16.0 * float(dim) ** (2 * order) * extra_factor
    cap = budget_mb() * 2**20
    if nbytes > cap:
        raise BudgetExceeded(
            f"order-{order} tensor over dim {dim} needs {nbytes / 2**20:.1f} MB,"
            f" budget is {cap / 2**20:.1f} MB")


@dataclass(frozen=True, eq=False)
class PairTensor:
    """Dense order-``n`` tensor with ``n`` (row, column) index pairs.

    ``entries`` has shape ``(dim,) * (2 * order)``; the array is made
    read-only on construction.
    """

    entries: np.ndarray
    flavor: str = CLASSICAL

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        arr = np.array(self.entries, dtype=complex)
        if arr.ndim == 0 or arr.ndim % 2:
            raise ValueError("entries must have an even, nonzero number of axes")
        if len(set(arr.shape)) != 1:
            raise ValueError(f"all axes must share one dimension, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def order(self) -> int:
        return self.entries.ndim // 2

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def matrix(self) -> np.ndarray:
        """View as an operator on the n-fold tensor product space.

        Rows are ``(i_1, ..., i_n)`` and columns ``(j_1, ..., j_n)``.
        """
        n, d = self.order, self.dim
        perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        return self.entries.transpose(perm).reshape(d**n, d**n)

    def with_entries(self, entries) -> "PairTensor":
        return PairTensor(entries, self.flavor)

    def __add__(self, other):
        _check_compatible(self, other)
        return self.with_entries(self.entries + other.entries)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self.with_entries(self.entries - other.entries)

    def __mul__(self, scalar):
        return self.with_entries(self.entries * scalar)

    __rmul__ = __mul__

    def allclose(self, other, atol: float = DEFAULT_TOL) -> bool:
        return (self.entries.shape == other.entries.shape
                and max_abs(self.entries - other.entries) <= atol)


def _check_compatible(a: PairTensor, b: PairTensor):
    if a.entries.shape != b.entries.shape:
        raise ValueError(f"shape mismatch {a.entries.shape} vs {b.entries.shape}")


def max_abs(x) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0


def outer(mats, flavor: str = CLASSICAL) -> PairTensor:
    """Tensor whose pair ``l`` carries matrix ``mats[l]``."""
    return PairTensor(outer_array(mats), flavor)


def outer_array(mats) -> np.ndarray:
    out = np.asarray(mats[0], dtype=complex)
    for m in mats[1:]:
        out = np.multiply.outer(out, np.asarray(m, dtype=complex))
    return out


def power(mat, n: int, flavor: str = CLASSICAL) -> PairTensor:
    """n-fold outer product of one matrix."""
    return outer([mat] * n, flavor)


def _check_slot(slot: int, n: int):
    if not 1 <= slot <= n:
        raise ValueError(f"slot {slot} out of range 1..{n}")


def contract_trace(t: PairTensor, slot: int) -> PairTensor:
    """Contract row and column index of pair ``slot`` (1-based)."""
    n = t.order
    if n < 2:
        raise ValueError("trace contraction needs order >= 2")
    _check_slot(slot, n)
    a = 2 * slot - 2
    return t.with_entries(np.trace(t.entries, axis1=a, axis2=a + 1))


def contract_chain(t: PairTensor, from_slot: int, to_slot: int) -> PairTensor:
    """Contract the column index of ``from_slot`` with the row index of
    ``to_slot``.

    The merged pair ``(i_from, j_to)`` takes the position of the lower of the
    two slots; the other slot is removed.  For quantum tensors only cyclic
    neighbours (``to_slot == from_slot + 1`` modulo ``n``) are allowed.
    """
    n = t.order
    if n < 2:
        raise ValueError("chain contraction needs order >= 2")
    _check_slot(from_slot, n)
    _check_slot(to_slot, n)
    if from_slot == to_slot:
        raise ValueError("use contract_trace for a pair contracted with itself")
    if t.flavor == QUANTUM and to_slot != from_slot % n + 1:
        raise ValueError(
            f"quantum tensors only admit adjacent chain contractions, got "
            f"({from_slot}, {to_slot})")
    src = list(range(2 * n))
    out_axes = []
    j_from, i_to = 2 * from_slot - 1, 2 * to_slot - 2
    src[i_to] = j_from
    keep = min(from_slot, to_slot)
    for slot in range(1, n + 1):
        if slot == keep:
            out_axes += [2 * from_slot - 2, 2 * to_slot - 1]
        elif slot not in (from_slot, to_slot):
            out_axes += [2 * slot - 2, 2 * slot - 1]
    return t.with_entries(np.einsum(t.entries, src, out_axes))


def permute_pairs(entries: np.ndarray, perm) -> np.ndarray:
    """Reorder pairs: output pair ``l`` is input pair ``perm[l]`` (0-based)."""
    axes = []
    for p in perm:
        axes += [2 * p, 2 * p + 1]
    return np.transpose(entries, axes)


def _group(n: int, flavor: str):
    if flavor == CLASSICAL:
        return list(itertools.permutations(range(n)))
    return [tuple((k + s) % n for k in range(n)) for s in range(n)]


def symmetrize(t: PairTensor) -> np.ndarray:
    """Average of ``t`` over its flavor's pair-permutation group."""
    perms = _group(t.order, t.flavor)
    return sum(permute_pairs(t.entries, p) for p in perms) / len(perms)


def symmetry_defect(t: PairTensor) -> float:
    """Largest entry deviation of ``t`` from its symmetrized image."""
    return max_abs(t.entries - symmetrize(t))


def full_permutation_defect(t: PairTensor) -> float:
    """Deviation from full pair-permutation symmetry regardless of flavor."""
    return symmetry_defect(PairTensor(t.entries, CLASSICAL))


def hermitian_conjugate(t: PairTensor) -> np.ndarray:
    """Entries of the Hermitian image of ``t``.

    Every pair is swapped and all entries conjugated; for quantum tensors the
    pair order is also reversed.
    """
    n = t.order
    axes = []
    order = range(n) if t.flavor == CLASSICAL else reversed(range(n))
    for p in order:
        axes += [2 * p + 1, 2 * p]
    return np.conj(np.transpose(t.entries, axes))


def hermiticity_defect(t: PairTensor) -> float:
    return max_abs(t.entries - hermitian_conjugate(t))


def is_hermitian(t: PairTensor, tol: float = DEFAULT_TOL) -> bool:
    return hermiticity_defect(t) <= tol


def symmetric_antisymmetric_split(t: PairTensor):
    """Fully symmetric and fully antisymmetric parts of a tensor.

    For an order-3 tensor with cyclic symmetry the two parts add up to the
    tensor itself.
    """
    n = t.order
    sym = np.zeros_like(t.entries)
    anti = np.zeros_like(t.entries)
    for perm in itertools.permutations(range(n)):
        img = permute_pairs(t.entries, perm)
        sym = sym + img
        anti = anti + _parity(perm) * img
    k = math.factorial(n)
    return t.with_entries(sym / k), t.with_entries(anti / k)


def _parity(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def contract_operators(t: PairTensor, ops) -> complex:
    """Full contraction ``T_{i1 j1, ...} O1_{j1 i1} O2_{j2 i2} ...``.

    ``None`` in ``ops`` stands for the identity (a trace over that pair).
    """
    d = t.dim
    out = t.entries
    for op in ops:
        m = np.eye(d) if op is None else np.asarray(op)
        out = np.tensordot(out, m, axes=([0, 1], [1, 0]))
    return complex(out)


def to_json(t: PairTensor) -> dict:
    flat = t.entries.reshape(-1)
    return {"order": t.order, "dim": t.dim, "flavor": t.flavor,
            "entries": [[float(z.real), float(z.imag)] for z in flat]}


def from_json(obj: dict) -> PairTensor:
    order, dim = int(obj["order"]), int(obj["dim"])
    vals = np.asarray(obj["entries"], dtype=float)
    if vals.shape != (dim ** (2 * order), 2):
        raise ValueError(f"expected {dim ** (2 * order)} [re, im] entries,"
                         f" got array of shape {vals.shape}")
    z = (vals[:, 0] + 1j * vals[:, 1]).reshape((dim,) * (2 * order))
    return PairTensor(z, obj.get("flavor", CLASSICAL))
