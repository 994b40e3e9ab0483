"""
Seeded random streams.

All randomness in statbench comes from numpy's Philox generator (4x64
counter-based), keyed by ``SeedSequence([seed, *stream keys])``. String keys
are hashed to stable 32-bit words so a named stream always maps to the same
substream regardless of Python's hash randomization.
"""

import zlib
from typing import Union

import numpy as np

StreamKey = Union[int, str]

GENERATOR_NAME = "Philox-4x64"


def _key_word(key: StreamKey) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    key = int(key)
    if key < 0:
        raise ValueError(f"stream keys must be nonnegative, got {key}")
    return key


def make_rng(seed: int, *keys: StreamKey) -> np.random.Generator:
    """Generator for ``seed`` and an optional path of substream keys."""
    seed = int(seed)
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    entropy = [seed] + [_key_word(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
