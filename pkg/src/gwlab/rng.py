"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from ``(seed, substream)``
by numpy's SeedSequence hash. Per-trajectory
seeds are derived from a master seed and the trajectory index with the
splitmix64 finaliser, so trajectory ``i`` gets the same draws whether it runs
alone, in a serial batch, or inside any worker of a parallel batch.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, index: int) -> int:
    """seed_i = splitmix64(splitmix64(master) XOR index)."""
    return splitmix64(splitmix64(master & MASK64) ^ (index & MASK64))


def stream(seed: int, substream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, substream)``."""
    seq = np.random.SeedSequence(seed & MASK64, spawn_key=(substream & MASK64,))
    return np.random.Generator(np.random.Philox(seq))
