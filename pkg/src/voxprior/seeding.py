"""Deterministic seed derivation.

All randomness in a run flows from one u64 master seed, split per component
by a fixed string label (plus optional integer indices, e.g. a chain index).
The derivation is stable across processes and platforms.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _entropy(master_seed: int, label: str, indices: tuple[int, ...]) -> list[int]:
    return [master_seed & _MASK64, zlib.crc32(label.encode("utf-8"))] + [
        i & _MASK64 for i in indices
    ]


def rng_for(master_seed: int, label: str, *indices: int) -> np.random.Generator:
    """A generator seeded from (master_seed, label, *indices)."""
    return np.random.default_rng(
        np.random.SeedSequence(_entropy(master_seed, label, indices))
    )


def seed_for(master_seed: int, label: str, *indices: int) -> int:
    """A derived u64 child seed (for APIs that take plain integers)."""
    seq = np.random.SeedSequence(_entropy(master_seed, label, indices))
    return int(seq.generate_state(1, np.uint64)[0])
