"""
Seeded random streams
Independent, reproducible generators keyed by (seed, scenario, grid, trial, attempt)
"""

import hashlib

import numpy as np


def scenario_key(name: str) -> int:
    """Stable 32-bit integer for a scenario name (spawn-key component)"""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def make_stream(seed: int, *key: int) -> np.random.Generator:
    """Build a generator whose stream depends only on seed and key"""
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(sequence))


def complex_gaussian(
    rng: np.random.Generator, shape: int | tuple[int, ...], variance: float = 1.0
) -> np.ndarray:
    """Circular complex Gaussian draws, real and imaginary parts each variance/2"""
    scale = np.sqrt(variance / 2.0)
    real = rng.standard_normal(shape)
    imag = rng.standard_normal(shape)
    return scale * (real + 1j * imag)
