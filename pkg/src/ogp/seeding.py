"""Deterministic seed splitting.

Each random sub-stream (edge counts, edge draws, labels, restarts, ...) is
driven by its own 64-bit seed obtained from a keyed hash of the master seed
and a stream tag, so streams never share state and can be generated in any
order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *tags) -> int:
    """Return a 64-bit seed for the sub-stream ``tags`` of ``seed``."""
    key = (int(seed) & _MASK64).to_bytes(8, "little")
    msg = "/".join(str(t) for t in tags).encode()
    digest = hashlib.blake2b(msg, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *tags)))


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorised splitmix64 finaliser on uint64 input (a counter-based hash)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def counter_uniforms(keys: np.ndarray, counter: int) -> np.ndarray:
    """Uniforms in [0, 1) from a per-key counter PRNG: ``u = hash(key, counter)``."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        mixed = splitmix64(keys ^ splitmix64(np.uint64(counter + 1) * np.uint64(0xD1B54A32D192ED03)))
    return (mixed >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
