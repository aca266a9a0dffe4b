"""Latent-grid types shared by the autoencoder, prior, and conditionals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class LatentGrid:
    """A d^3 grid of codebook indices; axes are (x, y, z)."""

    d: int
    tokens: np.ndarray  # [d, d, d] integer

    def __post_init__(self):
        if self.tokens.shape != (self.d,) * 3:
            raise DataError(
                f"LatentGrid: tokens shape {self.tokens.shape} != {(self.d,) * 3}"
            )

    def flat(self) -> np.ndarray:
        """Tokens in lexicographic (x, y, z) cell order."""
        return self.tokens.reshape(-1)

    @classmethod
    def from_flat(cls, d: int, flat: np.ndarray) -> "LatentGrid":
        return cls(d, np.asarray(flat).reshape(d, d, d))

    def copy(self) -> "LatentGrid":
        return LatentGrid(self.d, self.tokens.copy())


def location_index(location: tuple[int, int, int], d: int) -> int:
    x, y, z = location
    return (x * d + y) * d + z


def index_location(index: int, d: int) -> tuple[int, int, int]:
    x, rem = divmod(index, d * d)
    y, z = divmod(rem, d)
    return (x, y, z)


@dataclass
class ObservationSet:
    """An arbitrary set of (cell location, token) pairs; locations unique."""

    locations: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 3), dtype=np.int64)
    )
    tokens: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=np.int64).reshape(-1, 3)
        self.tokens = np.asarray(self.tokens, dtype=np.int64).reshape(-1)
        if self.locations.shape[0] != self.tokens.shape[0]:
            raise DataError(
                f"ObservationSet: {self.locations.shape[0]} locations vs "
                f"{self.tokens.shape[0]} tokens"
            )
        if len({tuple(loc) for loc in self.locations}) != self.locations.shape[0]:
            raise DataError("ObservationSet: duplicate locations")

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def to_json(self) -> list[dict]:
        return [
            {"location": [int(v) for v in loc], "token": int(tok)}
            for loc, tok in zip(self.locations, self.tokens)
        ]

    @classmethod
    def from_json(cls, items: list[dict]) -> "ObservationSet":
        locs = np.array([item["location"] for item in items], dtype=np.int64)
        toks = np.array([item["token"] for item in items], dtype=np.int64)
        return cls(locs.reshape(-1, 3), toks)
