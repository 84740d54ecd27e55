"""Labeled random streams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(seed: int, *labels) -> np.random.SeedSequence:
    # crc32 keeps label hashing stable across processes (unlike hash())
    key = [int(seed)] + [zlib.crc32(str(label).encode()) for label in labels]
    return np.random.SeedSequence(key)


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Independent generator for ``(seed, *labels)``; adding a consumer never shifts another."""
    return np.random.default_rng(derive_seed(seed, *labels))
