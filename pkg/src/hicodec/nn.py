"""Minimal deterministic CNN inference primitives on [C, H, W] float32 arrays."""

from __future__ import annotations

import numpy as np


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None,
           stride: int = 1, dilation: int = 1) -> np.ndarray:
    """Cross-correlation with same-padding: output spatial dims ceil(H/stride).

    x: [Cin, H, W]; kernel: [Cout, Cin, kh, kw]; bias: [Cout] or None.
    """
    cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ValueError(f"kernel expects {kcin} input channels, tensor has {cin}")
    out_h = -(-h // stride)
    out_w = -(-w // stride)
    eff_kh = (kh - 1) * dilation + 1
    eff_kw = (kw - 1) * dilation + 1
    pad_h = max((out_h - 1) * stride + eff_kh - h, 0)
    pad_w = max((out_w - 1) * stride + eff_kw - w, 0)
    xp = np.pad(x, ((0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)))

    # im2col: windows [Cin, OH, OW, kh, kw] via strided view, then one matmul.
    win = np.lib.stride_tricks.sliding_window_view(xp, (eff_kh, eff_kw), axis=(1, 2))
    win = win[:, ::stride, ::stride, ::dilation, ::dilation]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, cin * kh * kw)
    flat = kernel.reshape(cout, cin * kh * kw)
    out = cols @ flat.T
    if bias is not None:
        out += bias
    return np.ascontiguousarray(out.reshape(out_h, out_w, cout).transpose(2, 0, 1), dtype=np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def residual_block(x: np.ndarray, w1, b1, w2, b2) -> np.ndarray:
    """x + conv(relu(conv(x))); no normalization."""
    return x + conv2d(relu(conv2d(x, w1, b1)), w2, b2)


def pixel_shuffle(x: np.ndarray, r: int = 2) -> np.ndarray:
    """Rearrange [C*r*r, H, W] -> [C, r*H, r*W].

    Output value at (c, r*Y+dy, r*X+dx) = input[c*r*r + dy*r + dx, Y, X].
    """
    c, h, w = x.shape
    if c % (r * r) != 0:
        raise ValueError(f"channel count {c} not divisible by {r * r}")
    out = x.reshape(c // (r * r), r, r, h, w).transpose(0, 3, 1, 4, 2)
    return np.ascontiguousarray(out.reshape(c // (r * r), h * r, w * r))


def atrous_parallel(x: np.ndarray, branches) -> np.ndarray:
    """Three parallel 3x3 convolutions with dilation rates 1, 2, 4, concatenated.

    branches: sequence of (kernel, bias) for each rate.
    """
    if len(branches) != 3:
        raise ValueError("expected one branch per dilation rate 1, 2, 4")
    maps = [conv2d(x, k, b, dilation=rate) for (k, b), rate in zip(branches, (1, 2, 4))]
    return np.concatenate(maps, axis=0)
