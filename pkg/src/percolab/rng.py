"""Counter-based randomness.

Every random bit in the package is a pure function of a 64-bit key and a
counter (vertex id, trial id, retry index), so results do not depend on the
order in which work is scheduled.
"""

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Hash an arbitrary tuple of ints/strings into a 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def _splitmix(z):
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def hash64(key: int, ids) -> np.ndarray:
    """64-bit hashes of ``ids`` under ``key`` (vectorised splitmix64)."""
    ids = np.asarray(ids, dtype=np.uint64)
    k = _splitmix(np.uint64(key & _MASK64))
    return _splitmix(_splitmix(ids) ^ k)


def uniforms(key: int, ids) -> np.ndarray:
    """Uniform floats in [0, 1), one per id, deterministic in (key, id)."""
    return (hash64(key, ids) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def generator(seed: int, *counter) -> np.random.Generator:
    """A numpy Generator keyed by ``seed`` and an integer counter path."""
    words = [seed & _MASK64, *[c & _MASK64 for c in counter]]
    return np.random.default_rng(np.random.SeedSequence(words))
