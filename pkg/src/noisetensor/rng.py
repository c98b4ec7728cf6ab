"""Counter-based random streams.

Every random number used by the package is a pure function of
``(seed, stream name, counter words)``.  The block cipher is Philox4x32-10,
evaluated with vectorized numpy arithmetic so that a whole batch of
trajectories (or a whole block of time steps) can be drawn at once.

Because nothing is sequential, the value seen by trajectory ``k`` at step
``s`` does not depend on how trajectories are batched or on how many worker
threads are used.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_ROUNDS = 10


def philox4x32(counter, key):
    """Philox4x32-10 block function.

    Parameters
    ----------
    counter : array_like of uint, shape (..., 4)
        32-bit counter words (broadcastable).
    key : sequence of two ints
        32-bit key words.

    Returns
    -------
    numpy.ndarray of uint64, shape (..., 4)
        Four 32-bit output words per counter (stored in uint64).
    """
    c = np.asarray(counter, dtype=np.uint64) & _MASK32
    c0, c1, c2, c3 = (c[..., i] for i in range(4))
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _MASK32
        c0 = hi1 ^ c1 ^ np.uint64(k0)
        c1 = lo1
        c2 = hi0 ^ c3 ^ np.uint64(k1)
        c3 = lo0
    return np.stack([c0, c1, c2, c3], axis=-1)


def derive_key(seed: int, name: str) -> tuple[int, int]:
    """Two 32-bit key words for the named stream of ``seed``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return (int.from_bytes(digest[:4], "little"),
            int.from_bytes(digest[4:8], "little"))


def _to_unit(hi, lo):
    # 53-bit double strictly inside (0, 1)
    bits = ((hi >> np.uint64(5)) << np.uint64(26)) | (lo >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


class Stream:
    """A named, seeded family of counter-based random numbers.

    A draw is addressed by up to three integer coordinates ``(a, b, c)``
    (for example trajectory id, step and sub-block).  Each address yields two
    uniforms in (0, 1) or, via Box-Muller, two standard normals.
    """

    def __init__(self, seed: int, name: str):
        self.seed = int(seed)
        self.name = name
        self.key = derive_key(self.seed, name)

    def __repr__(self):
        return f"Stream(seed={self.seed}, name={self.name!r})"

    def _words(self, a, b=0, c=0):
        a, b, c = np.broadcast_arrays(np.asarray(a, dtype=np.uint64),
                                      np.asarray(b, dtype=np.uint64),
                                      np.asarray(c, dtype=np.uint64))
        ctr = np.stack([a & _MASK32, a >> np.uint64(32), b & _MASK32, c & _MASK32],
                       axis=-1)
        return philox4x32(ctr, self.key)

    def uniforms(self, a, b=0, c=0) -> np.ndarray:
        """Two uniforms per address, shape ``broadcast(a, b, c) + (2,)``."""
        w = self._words(a, b, c)
        return np.stack([_to_unit(w[..., 0], w[..., 1]),
                         _to_unit(w[..., 2], w[..., 3])], axis=-1)

    def normals(self, a, b=0, count: int = 2) -> np.ndarray:
        """``count`` standard normals per address ``(a, b)``.

        Sub-blocks ``c = 0, 1, ...`` supply pairs until ``count`` values exist.
        """
        blocks = (count + 1) // 2
        a = np.asarray(a)[..., None]
        b = np.asarray(b)[..., None]
        c = np.arange(blocks)
        u = self.uniforms(a, b, c)
        r = np.sqrt(-2.0 * np.log(u[..., 0]))
        theta = 2.0 * np.pi * u[..., 1]
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
        z = z.reshape(z.shape[:-2] + (2 * blocks,))
        return z[..., :count]
