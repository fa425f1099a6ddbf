"""Analytic-vs-numeric gradient verification in float64.

Uses the soft-quantization forward (the surrogate whose Jacobian the
straight-through estimator borrows), since the hard forward is piecewise
constant in the latents and has no meaningful finite difference.
"""

from __future__ import annotations

import numpy as np
import torch

from .model import CodecNet


def grad_check(net: CodecNet, x_uint: torch.Tensor, step: float = 1e-5,
               entries_per_tensor: int = 4, seed: int = 0) -> dict[str, float]:
    """Max relative error per tensor; central differences, 64-bit."""
    net = net.double()
    x = x_uint.double()
    rng = np.random.default_rng(seed)

    def forward() -> torch.Tensor:
        total, _ = net.loss_bits(x, quantization="soft")
        return total

    net.zero_grad()
    forward().backward()

    def numeric_grad(flat: torch.Tensor, i: int, h: float) -> float:
        orig = float(flat[i])
        with torch.no_grad():
            flat[i] = orig + h
            up = float(forward())
            flat[i] = orig - h
            down = float(forward())
            flat[i] = orig
        return (up - down) / (2 * h)

    report: dict[str, float] = {}
    for name, p in net.params.items():
        grad = p.grad
        assert grad is not None, name
        worst = 0.0
        flat = p.data.view(-1)
        picks = rng.choice(flat.numel(), size=min(entries_per_tensor, flat.numel()),
                           replace=False)
        for i in picks:
            analytic = float(grad.view(-1)[i])

            def rel_err(h: float) -> float:
                numeric = numeric_grad(flat, i, h)
                return abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-4)

            err = rel_err(step)
            if err >= 1e-3:
                # A relu/abs kink inside the difference interval inflates the
                # estimate; a real gradient bug survives a smaller step.
                err = min(err, rel_err(step / 8))
            worst = max(worst, err)
        report[name.replace("__", ".")] = worst
    return report


def max_relative_error(report: dict[str, float]) -> float:
    return max(report.values())
