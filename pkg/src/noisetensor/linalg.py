"""Small dense linear-algebra helpers shared across modules."""

from __future__ import annotations

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])
# |0><1|: lowers the excited level |1> to |0>
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()


def dag(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def comm(a, b):
    return a @ b - b @ a


def acomm(a, b):
    return a @ b + b @ a


def is_hermitian(a, tol: float = 1e-10) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dag(a)), initial=0.0) <= tol


def require_square(a, name: str = "matrix", dim: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ValueError(f"{name} has dimension {a.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def require_hermitian(a, name: str = "matrix", tol: float = 1e-10, dim: int | None = None):
    a = require_square(a, name, dim)
    if not is_hermitian(a, tol):
        raise ValueError(f"{name} is not Hermitian (defect {np.max(np.abs(a - dag(a))):.3g})")
    return a


def normalize(psi, tol: float | None = None) -> np.ndarray:
    """Return ``psi / ||psi||``; if ``tol`` is given, reject norms off by more."""
    psi = np.asarray(psi, dtype=complex)
    nrm = np.linalg.norm(psi)
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("state has zero or non-finite norm")
    if tol is not None and abs(nrm - 1.0) > tol:
        raise ValueError(f"state norm {nrm:.12g} differs from 1 by more than {tol}")
    return psi / nrm


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, np.conj(psi))


def expect(op, psi) -> complex:
    psi = np.asarray(psi)
    return complex(np.vdot(psi, op @ psi))


def min_eigenvalue(rho) -> float:
    return float(np.linalg.eigvalsh((rho + dag(rho)) / 2)[0])


def is_density_matrix(rho, tol: float = 1e-10) -> bool:
    rho = np.asarray(rho)
    return (is_hermitian(rho, tol) and abs(np.trace(rho) - 1) <= tol
            and min_eigenvalue(rho) >= -tol)


def annihilation(dim: int) -> np.ndarray:
    """Truncated oscillator lowering operator in the Fock basis."""
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def position_momentum(dim: int, mass: float = 1.0, omega: float = 1.0):
    """Truncated ``x = (a + a^dag)/sqrt(2 m w)`` and ``p = i sqrt(m w / 2)(a^dag - a)``."""
    a = annihilation(dim)
    x = (a + dag(a)) / np.sqrt(2 * mass * omega)
    p = 1j * np.sqrt(mass * omega / 2) * (dag(a) - a)
    return x, p


def coherent_state(dim: int, alpha: complex) -> np.ndarray:
    """Truncated and renormalized coherent state."""
    n = np.arange(dim)
    logfact = np.cumsum(np.log(np.maximum(n, 1)))
    amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * logfact) * alpha ** n
    return normalize(amp)


def random_state(rng, dim: int) -> np.ndarray:
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return z / np.linalg.norm(z)


def random_hermitian(rng, dim: int, scale: float = 1.0) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (z + dag(z)) / 2


def random_matrix(rng, dim: int, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)


def random_density(rng, dim: int, rank: int | None = None) -> np.ndarray:
    """Random density matrix of the given rank (full rank by default)."""
    rank = dim if rank is None else rank
    z = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = z @ dag(z)
    return rho / np.trace(rho).real


def matrix_to_json(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def matrix_from_json(obj, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(f"{name}: expected nested [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def vector_to_json(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def vector_from_json(obj, name: str = "vector") -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 2 or arr.shape[-1] != 2:
        raise ValueError(f"{name}: expected a list of [re, im] pairs, got shape {arr.shape}")
    return arr[:, 0] + 1j * arr[:, 1]
