"""Deterministic splittable random streams.

All randomness in the package flows from one root seed through named
splits, so stream(seed, "trial", 7) is the same generator no matter how
many other trials run or in which order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_part(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key parts must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        # stable across processes and platforms, unlike hash()
        return int.from_bytes(hashlib.sha256(part.encode()).digest()[:4], "little")
    raise TypeError(f"stream key parts must be int or str, got {type(part).__name__}")


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Generator for the sub-stream of `seed` addressed by `path`."""
    key = tuple(_key_part(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
