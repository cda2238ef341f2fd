"""Binary feature masks and the position -> mask transfer rules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

THRESHOLD = "threshold"
SIGMOID = "sigmoid"
BINARIZE_MODES = (THRESHOLD, SIGMOID)


@dataclass(frozen=True, eq=False)
class FeatureMask:
    """Selected features as a boolean vector; ``bits[j]`` selects feature j."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool).ravel()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureMask) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"FeatureMask('{self.to_string()}')"

    def key(self) -> bytes:
        return np.packbits(self.bits).tobytes() + len(self.bits).to_bytes(4, "little")

    def selected_count(self) -> int:
        return int(self.bits.sum())

    def selected_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def selected_names(self, names: Sequence[str]) -> list[str]:
        if len(names) != len(self.bits):
            raise ValueError("name list length differs from mask length")
        return [names[j] for j in self.selected_indices()]

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_string(cls, text: str) -> "FeatureMask":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a mask string: {text!r}")
        return cls(np.array([c == "1" for c in text]))

    @classmethod
    def from_indices(cls, indices, d: int) -> "FeatureMask":
        bits = np.zeros(d, dtype=bool)
        bits[list(indices)] = True
        return cls(bits)

    @classmethod
    def ones(cls, d: int) -> "FeatureMask":
        return cls(np.ones(d, dtype=bool))

    @classmethod
    def zeros(cls, d: int) -> "FeatureMask":
        return cls(np.zeros(d, dtype=bool))


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-np.asarray(v, dtype=float)))


def clamp_position(coords) -> np.ndarray:
    return np.clip(np.asarray(coords, dtype=float), 0.0, 1.0)


def binarize(position, mode: str = THRESHOLD,
             rng: np.random.Generator | None = None) -> FeatureMask:
    """Turn a continuous position into a mask.

    ``threshold`` selects coordinates >= 0.5. ``sigmoid`` selects coordinate
    j when a uniform draw falls below ``sigmoid(position[j])`` and needs
    ``rng``.
    """
    coords = np.asarray(position, dtype=float)
    if mode == THRESHOLD:
        return FeatureMask(coords >= 0.5)
    if mode == SIGMOID:
        if rng is None:
            raise ValueError("sigmoid binarization needs an rng")
        return FeatureMask(rng.random(coords.shape) < sigmoid(coords))
    raise ValueError(f"unknown binarize mode {mode!r}; expected one of {BINARIZE_MODES}")


def apply_mask(mask: FeatureMask, rows) -> np.ndarray:
    """Keep the selected columns of a row (1-D) or row matrix (2-D), in order."""
    rows = np.asarray(rows)
    if rows.shape[-1] != len(mask):
        raise ValueError(f"mask length {len(mask)} does not match row length {rows.shape[-1]}")
    return rows[..., mask.bits]
