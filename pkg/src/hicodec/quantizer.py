"""Scalar quantization onto a fixed level grid, hard and soft variants."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_NUM_LEVELS = 25
DEFAULT_SIGMA_Q = 2.0


@dataclass(frozen=True)
class LevelGrid:
    """Strictly increasing quantizer levels, default 25 evenly spaced in [-1, 1]."""

    levels: np.ndarray = field(default_factory=lambda: make_levels(DEFAULT_NUM_LEVELS))
    sigma_q: float = DEFAULT_SIGMA_Q

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        if levels.ndim != 1 or len(levels) < 2 or np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be a strictly increasing 1-D grid")
        object.__setattr__(self, "levels", levels)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def spacing(self) -> float:
        # Uniform for the default grid; used as the mixture bin width.
        return float(self.levels[1] - self.levels[0])


def make_levels(num_levels: int = DEFAULT_NUM_LEVELS, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    return np.linspace(lo, hi, num_levels)


def quantize_hard(zp, grid: LevelGrid):
    """Nearest-neighbor assignment; saturates outside the grid.

    Returns (indices, values). Ties on exact midpoints break toward the
    lower index. Accepts scalars or arrays.
    """
    zp = np.asarray(zp, dtype=np.float64)
    if not np.all(np.isfinite(zp)):
        raise ValueError("quantizer input must be finite")
    dist = np.abs(zp[..., None] - grid.levels)
    idx = np.argmin(dist, axis=-1)  # argmin takes the first (lower) index on ties
    return idx, grid.levels[idx]


def quantize_soft(zp, grid: LevelGrid, sigma_q: float | None = None):
    """Softmax-weighted level average: sum_j w_j * l_j, w_j ∝ exp(-sigma_q |zp - l_j|)."""
    zp = np.asarray(zp, dtype=np.float64)
    sq = grid.sigma_q if sigma_q is None else sigma_q
    logits = -sq * np.abs(zp[..., None] - grid.levels)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return w @ grid.levels
