"""Deterministic derivation of independent random streams from one master seed."""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator keyed by ``(seed, *keys)``.

    Streams for different key paths are statistically independent, so e.g. the
    user stream of interval 3 never depends on how many draws the challenger
    made earlier.
    """
    entropy = [int(seed) & 0xFFFFFFFF] + [_key(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys) -> int:
    return int(derive_rng(seed, *keys).integers(0, 2**31 - 1))
