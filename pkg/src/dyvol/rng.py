"""Reproducible random streams.

Every stream is numpy's Philox4x64-10 counter-based generator keyed by the
128-bit value ``seed + 2**64 * stream_id``, so streams with different ids are
independent and a given ``(seed, stream_id)`` yields the same draws on every
platform.
"""

from __future__ import annotations

import os

import numpy as np

DEFAULT_SEED = 20020101
SEED_ENV = "DYVOL_SEED"

_MASK64 = (1 << 64) - 1


def default_seed() -> int:
    value = os.environ.get(SEED_ENV)
    return int(value) if value else DEFAULT_SEED


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    key = (int(seed) & _MASK64) | ((int(stream_id) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *labels: int) -> int:
    """Deterministic 64-bit child seed for replicate ``labels`` of a run."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, *[int(x) for x in labels]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
