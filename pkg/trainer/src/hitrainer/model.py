"""Trainable mirror of the hicodec architecture.

Parameters are stored under the same names the portable weight file uses,
so export is a straight copy. All forward geometry (same-padding, stride-2
dims, pixel shuffle layout) matches the NumPy inference engine so the two
sides agree on every activation.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from hicodec.network import (
    MODE_LEARNED,
    MODE_RGB_SHARED,
    ModelWeights,
    NetworkSpec,
    random_weights,
    required_tensors,
)
from hicodec import pyramid

SIGMA_MIN = 1e-3
NLL_FLOOR_LOG2 = -16.0  # per-symbol probability floored at 2^-16


def _key(name: str) -> str:
    return name.replace(".", "__")


def conv2d_same(x: torch.Tensor, w: torch.Tensor, b: torch.Tensor,
                stride: int = 1, dilation: int = 1) -> torch.Tensor:
    """Same-padding cross-correlation with ceil(H/stride) output dims."""
    h, wd = x.shape[-2:]
    kh, kw = w.shape[-2:]
    out_h, out_w = -(-h // stride), -(-wd // stride)
    eff_kh = (kh - 1) * dilation + 1
    eff_kw = (kw - 1) * dilation + 1
    pad_h = max((out_h - 1) * stride + eff_kh - h, 0)
    pad_w = max((out_w - 1) * stride + eff_kw - wd, 0)
    x = F.pad(x, (pad_w // 2, pad_w - pad_w // 2, pad_h // 2, pad_h - pad_h // 2))
    return F.conv2d(x, w, b, stride=stride, dilation=dilation)


def quantize_soft(zp: torch.Tensor, levels: torch.Tensor, sigma_q: float) -> torch.Tensor:
    """Softmax-weighted level average; the differentiable surrogate."""
    w = torch.softmax(-sigma_q * (zp.unsqueeze(-1) - levels).abs(), dim=-1)
    return w @ levels


def quantize_st(zp: torch.Tensor, levels: torch.Tensor, sigma_q: float) -> torch.Tensor:
    """Hard values in the forward pass, soft-quantization Jacobian backward."""
    idx = (zp.detach().unsqueeze(-1) - levels).abs().argmin(dim=-1)
    hard = levels[idx]
    soft = quantize_soft(zp, levels, sigma_q)
    # The correction term is exactly zero in the forward pass; parenthesized
    # so no rounding from (hard + soft) leaks into the forward values.
    return hard + (soft - soft.detach())


class CodecNet(nn.Module):
    """The S-scale hierarchy as a flat named-parameter module."""

    def __init__(self, spec: NetworkSpec, mode: str, seed: int = 0):
        super().__init__()
        self.spec = spec
        self.mode = mode
        init = random_weights(spec, mode, np.random.default_rng(seed))
        self.params = nn.ParameterDict({
            _key(name): nn.Parameter(torch.from_numpy(arr.copy()))
            for name, arr in init.tensors.items()
        })
        levels = np.linspace(-1.0, 1.0, spec.num_levels)
        self.register_buffer("levels", torch.from_numpy(levels))
        self.bin_width = float(levels[1] - levels[0])

    @classmethod
    def from_weights(cls, weights: ModelWeights) -> "CodecNet":
        net = cls(weights.spec, weights.mode)
        with torch.no_grad():
            for name, arr in weights.tensors.items():
                net.params[_key(name)].copy_(torch.from_numpy(arr.copy()))
        return net

    def tensor(self, name: str) -> torch.Tensor:
        return self.params[_key(name)]

    def export_weights(self) -> ModelWeights:
        tensors = {
            name: self.tensor(name).detach().cpu().to(torch.float32).numpy().copy()
            for name in required_tensors(self.spec, self.mode)
        }
        return ModelWeights(self.spec, self.mode, tensors)

    # -- forward pieces -----------------------------------------------------

    def _conv(self, name: str, x: torch.Tensor, stride: int = 1,
              dilation: int = 1) -> torch.Tensor:
        return conv2d_same(x, self.tensor(f"{name}.w"), self.tensor(f"{name}.b"),
                           stride=stride, dilation=dilation)

    def _res_chain(self, prefix: str, x: torch.Tensor) -> torch.Tensor:
        for i in range(self.spec.n_resblocks):
            t = self._conv(f"{prefix}.res{i}.conv1", x).relu()
            x = x + self._conv(f"{prefix}.res{i}.conv2", t)
        return x

    def run_extractor(self, scale: int, x: torch.Tensor):
        p = f"enc{scale}"
        t = self._conv(f"{p}.head", x, stride=2)
        t = self._res_chain(p, t)
        return t, self._conv(f"{p}.proj", t)

    def run_predictor_trunk(self, scale: int, z_in: torch.Tensor,
                            f_above: torch.Tensor | None) -> torch.Tensor:
        p = f"dec{scale}"
        t = self._conv(f"{p}.in", z_in)
        if f_above is not None:
            t = t + f_above
        t = self._res_chain(p, t)
        a = torch.cat([self._conv(f"{p}.atrous.r{r}", t, dilation=r)
                       for r in (1, 2, 4)], dim=1)
        return F.pixel_shuffle(self._conv(f"{p}.up", a), 2)

    def run_head(self, scale: int, features: torch.Tensor) -> torch.Tensor:
        return self._conv(f"dec{scale}.head", features)

    def dec_scale(self, scale: int) -> int:
        return 1 if self.mode == MODE_RGB_SHARED else scale

    # -- likelihood ---------------------------------------------------------

    @staticmethod
    def _mixture_nll(pi, mu, sigma, target, bin_width, lo, hi):
        """-log2 p of width-b bins centered at target, tails absorbed.

        pi/mu/sigma: [B, C, K, H, W]; target: [B, C, H, W] in the value
        domain with edges lo/hi.
        """
        t = target.unsqueeze(2)
        half = bin_width / 2.0
        eps = bin_width * 1e-6
        upper = torch.sigmoid((t + half - mu) / sigma)
        lower = torch.sigmoid((t - half - mu) / sigma)
        upper = torch.where(t >= hi - eps, torch.ones_like(upper), upper)
        lower = torch.where(t <= lo + eps, torch.zeros_like(lower), lower)
        pmf = (pi * (upper - lower)).sum(dim=2)
        return -torch.log2(pmf.clamp_min(2.0 ** NLL_FLOOR_LOG2))

    def _split_latent_raw(self, raw: torch.Tensor, channels: int):
        b, _, h, w = raw.shape
        k = self.spec.mixture_components
        blocks = raw.reshape(b, 3, channels, k, h, w)
        pi = torch.softmax(blocks[:, 0], dim=2)
        mu = blocks[:, 1]
        sigma = torch.exp(blocks[:, 2].clamp(-40.0, 40.0)).clamp_min(SIGMA_MIN)
        return pi, mu, sigma

    def latent_nll_bits(self, raw: torch.Tensor, target_values: torch.Tensor,
                        channels: int, bin_width: float, lo: float,
                        hi: float) -> torch.Tensor:
        pi, mu, sigma = self._split_latent_raw(raw[:, : 3 * channels * self.spec.mixture_components], channels)
        return self._mixture_nll(pi, mu, sigma, target_values, bin_width, lo, hi).sum()

    def rgb_nll_bits(self, raw: torch.Tensor, x_uint: torch.Tensor) -> torch.Tensor:
        """x_uint: [B, 3, H, W] in 0..255 (float); means shift per Eq.-8-style
        weak autoregression using the true earlier channels."""
        b, _, h, w = raw.shape
        k = self.spec.mixture_components
        blocks = raw.reshape(b, 4, 3, k, h, w)
        pi = torch.softmax(blocks[:, 0], dim=2)
        mu = blocks[:, 1]
        sigma = torch.exp(blocks[:, 2].clamp(-40.0, 40.0)).clamp_min(SIGMA_MIN)
        lam = torch.tanh(blocks[:, 3])
        xc = x_uint - 127.5
        x1, x2 = xc[:, 0].unsqueeze(1), xc[:, 1].unsqueeze(1)
        mu = torch.stack([
            mu[:, 0],
            mu[:, 1] + lam[:, 0] * x1,
            mu[:, 2] + lam[:, 1] * x1 + lam[:, 2] * x2,
        ], dim=1)
        return self._mixture_nll(pi, mu, sigma, xc, 1.0, -127.5, 127.5).sum()

    # -- full loss ----------------------------------------------------------

    def hierarchy(self, x_uint: torch.Tensor, quantization: str = "hard"):
        """Per-scale predictor inputs and coding targets for a batch.

        Returns (inputs, targets): lists indexed s-1 for s = 1..S. In
        learned mode both carry gradients (straight-through for "hard",
        fully soft for "soft"); pyramid modes yield constant 8-bit grids.
        """
        if self.mode == MODE_LEARNED:
            feat = x_uint / 127.5 - 1.0
            zs = []
            for s in range(1, self.spec.num_scales + 1):
                feat, zp = self.run_extractor(s, feat)
                if quantization == "soft":
                    zs.append(quantize_soft(zp, self.levels.to(zp.dtype), self.spec.sigma_q))
                else:
                    zs.append(quantize_st(zp, self.levels.to(zp.dtype), self.spec.sigma_q))
            return zs, zs
        planes = x_uint.detach().cpu().numpy().astype(np.uint8).transpose(0, 2, 3, 1)
        inputs, targets = [], []
        for s in range(1, self.spec.num_scales + 1):
            level = np.stack([pyramid.bicubic_down(p, 2 ** s) for p in planes])
            grid = torch.from_numpy(level.transpose(0, 3, 1, 2).astype(np.float32))
            grid = grid.to(x_uint.device, x_uint.dtype)
            inputs.append(grid / 127.5 - 1.0)
            targets.append(grid)
        return inputs, targets

    def loss_bits(self, x_uint: torch.Tensor, quantization: str = "hard",
                  detach_targets: bool = False):
        """Total coding cost of a batch in bits (uniform top scale included).

        Returns (total bits, per-scale dict keyed 0..S with scale S the
        constant uniform term).
        """
        spec = self.spec
        inputs, targets = self.hierarchy(x_uint, quantization)
        per_scale: dict[int, torch.Tensor] = {}
        learned = self.mode == MODE_LEARNED
        alphabet = spec.num_levels if learned else 256
        top = targets[-1]
        per_scale[spec.num_scales] = torch.tensor(
            top.numel() * math.log2(alphabet), dtype=x_uint.dtype, device=x_uint.device)

        f = None
        for s in range(spec.num_scales, 0, -1):
            f = self.run_predictor_trunk(self.dec_scale(s), inputs[s - 1], f)
            if s == 1:
                break
            raw = self.run_head(self.dec_scale(s), f)
            target = targets[s - 2]
            if detach_targets:
                target = target.detach()
            if learned:
                per_scale[s - 1] = self.latent_nll_bits(
                    raw, target, spec.latent_channels, self.bin_width, -1.0, 1.0)
            else:
                per_scale[s - 1] = self.latent_nll_bits(
                    raw, target - 127.5, 3, 1.0, -127.5, 127.5)
        raw = self.run_head(1, f)
        per_scale[0] = self.rgb_nll_bits(raw, x_uint)
        total = sum(per_scale.values())
        return total, per_scale

    def bpsp(self, x_uint: torch.Tensor, quantization: str = "hard") -> float:
        total, _ = self.loss_bits(x_uint, quantization)
        return float(total.detach()) / x_uint.numel()
