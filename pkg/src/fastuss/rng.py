"""Deterministic weight-initialisation generator.

xoshiro256** run as 64 independent lanes in numpy, each lane seeded from a
splitmix64 stream. Output order: step 0 of lanes 0..63, step 1 of lanes
0..63, and so on. Doubles take the top 53 bits of each draw. The byte stream
depends only on the seed, never on the platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

LANES = 64
_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256:
    def __init__(self, seed: int) -> None:
        sm = seed & _MASK
        words = []
        for _ in range(4 * LANES):
            sm, out = splitmix64(sm)
            words.append(out)
        self.s = np.array(words, dtype=np.uint64).reshape(4, LANES)

    def next_u64(self, n: int) -> np.ndarray:
        steps = -(-n // LANES)
        out = np.empty((steps, LANES), dtype=np.uint64)
        s0, s1, s2, s3 = (self.s[i].copy() for i in range(4))
        five, nine = np.uint64(5), np.uint64(9)
        with np.errstate(over="ignore"):
            for i in range(steps):
                out[i] = _rotl(s1 * five, 7) * nine
                t = s1 << np.uint64(17)
                s2 ^= s0
                s3 ^= s1
                s1 ^= s2
                s0 ^= s3
                s2 ^= t
                s3 = _rotl(s3, 45)
        self.s = np.stack([s0, s1, s2, s3])
        return out.reshape(-1)[:n]

    def uniform(self, n: int, low: float, high: float) -> np.ndarray:
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return low + (high - low) * u


def tensor_seed(seed: int, name: str) -> int:
    """Per-tensor seed so a tensor's values do not depend on bundle ordering."""
    h = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    return (seed * 0x9E3779B97F4A7C15 ^ h) & _MASK
