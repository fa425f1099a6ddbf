"""Bicubic image pyramid for the non-learned baselines.

Downsampling by 2 uses the separable Catmull-Rom kernel (a = -0.5) sampled
at half-pixel offsets, which reduces to the 4-tap filter
[-1/16, 9/16, 9/16, -1/16] with clamp-to-edge boundaries. Larger power-of-
two factors are iterated halvings; every level is rounded back to 8 bits.
"""

from __future__ import annotations

import numpy as np

# Catmull-Rom weights at distances 1.5 and 0.5 from the sample center.
_W_FAR = -0.0625
_W_NEAR = 0.5625


def _halve_axis(x: np.ndarray, axis: int) -> np.ndarray:
    """Ceil-halve one spatial axis of a float array with edge clamping."""
    n = x.shape[axis]
    out_n = (n + 1) // 2
    centers = 2 * np.arange(out_n)  # tap indices centers-1 .. centers+2
    idx = np.stack([centers - 1, centers, centers + 1, centers + 2])
    idx = np.clip(idx, 0, n - 1)
    taps = np.take(x, idx.reshape(-1), axis=axis)
    taps = taps.reshape(*x.shape[:axis], 4, out_n, *x.shape[axis + 1:])
    w = np.array([_W_FAR, _W_NEAR, _W_NEAR, _W_FAR])
    w = w.reshape((1,) * axis + (4, 1) + (1,) * (x.ndim - axis - 1))
    return (taps * w).sum(axis=axis)


def bicubic_down(image: np.ndarray, factor: int) -> np.ndarray:
    """Downsample an [H, W, 3] (or [H, W]) uint8 image by a power-of-two factor.

    Output dims are ceil-halved log2(factor) times; values are rounded half
    up and clipped back to 8 bits at every halving.
    """
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"factor must be a power of two, got {factor}")
    out = np.asarray(image)
    if out.dtype != np.uint8:
        raise ValueError("expected an 8-bit image")
    while factor > 1:
        x = out.astype(np.float64)
        x = _halve_axis(x, 0)
        x = _halve_axis(x, 1)
        out = np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)
        factor //= 2
    return out


def rgb_pyramid(image: np.ndarray, num_scales: int) -> list[np.ndarray]:
    """Levels [x, B_2(x), ..., B_{2^S}(x)]; level 0 is the image itself."""
    levels = [np.asarray(image)]
    for _ in range(num_scales):
        levels.append(bicubic_down(levels[-1], 2))
    return levels
