"""Counter-based random streams for bit-reproducible sampling.

All randomness in the package flows through Philox (a counter-based
generator with a fixed integer specification) and an explicit
inverse-CDF map to Gaussians, so a (seed, shape) pair identifies the
output across runs and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of labels (master seed, grid index, ...)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def raw_stream(seed: int, count: int) -> np.ndarray:
    """`count` raw uint64 draws from a Philox stream keyed by `seed`."""
    return np.random.Philox(key=seed & _MASK64).random_raw(count)


def uniform_open(seed: int, shape) -> np.ndarray:
    """Uniforms in the open interval (0, 1); never exactly 0 or 1."""
    raw = raw_stream(seed, int(np.prod(shape)))
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return u.reshape(shape)


def standard_gaussian(seed: int, shape) -> np.ndarray:
    """i.i.d. N(0,1) entries via inverse-CDF of the Philox uniform stream."""
    return ndtri(uniform_open(seed, shape))


def rademacher(seed: int, shape) -> np.ndarray:
    """i.i.d. +-1 entries (mean 0, variance 1)."""
    raw = raw_stream(seed, int(np.prod(shape)))
    return (1.0 - 2.0 * (raw & np.uint64(1)).astype(np.float64)).reshape(shape)
