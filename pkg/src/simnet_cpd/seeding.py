"""Seed derivation shared by every random generator.

All randomness flows from one integer root seed. Sub-streams are derived
with :class:`numpy.random.SeedSequence` spawn keys, so the stream used by a
replica depends only on ``(root, purpose, index)`` and never on the order in
which replicas are scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np

_PURPOSE_CACHE: dict[str, int] = {}


def purpose_key(purpose: str) -> int:
    """Stable 32-bit tag for a named sub-stream."""
    key = _PURPOSE_CACHE.get(purpose)
    if key is None:
        key = zlib.crc32(purpose.encode("utf-8"))
        _PURPOSE_CACHE[purpose] = key
    return key


def derive_rng(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, purpose, *index)``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(purpose_key(purpose), *map(int, index)))
    return np.random.Generator(np.random.PCG64(ss))
