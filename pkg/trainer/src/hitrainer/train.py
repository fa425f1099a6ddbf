"""Desk-scale training loop with deterministic seeding and NaN abort."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch

from hicodec import image_io
from hicodec.network import NetworkSpec, save_weights

from .model import CodecNet


class TrainError(Exception):
    pass


@dataclass
class TrainConfig:
    mode: str = "learned"
    crop: int = 32
    batch_size: int = 8
    steps: int = 2000
    learning_rate: float = 1e-4
    decay_factor: float = 0.75
    decay_interval: int = 500  # steps between learning-rate decays
    rmsprop_smoothing: float = 0.9
    rmsprop_eps: float = 1e-8
    seed: int = 0
    log_interval: int = 100
    spec: NetworkSpec = field(default_factory=NetworkSpec)


def load_corpus(directory: str) -> list[np.ndarray]:
    exts = (".ppm", ".pnm", ".png")
    paths = sorted(os.path.join(directory, n) for n in os.listdir(directory)
                   if n.lower().endswith(exts))
    if not paths:
        raise TrainError(f"no images found in {directory}")
    return [image_io.read_image(p) for p in paths]


def make_toy_corpus(directory: str, count: int = 32, size: int = 64,
                    seed: int = 0, noise: float = 1.0) -> list[str]:
    """Synthetic corpus: smooth gradients, blocks, high-frequency stripe
    patches and mild noise, so there is real structure to learn but the
    set stays hermetic. The stripe patches alias away under bicubic
    downsampling, so their phase is only recoverable from a full-resolution
    representation."""
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    yi, xi = np.mgrid[0:size, 0:size].astype(np.float64)
    paths = []
    for i in range(count):
        base = np.zeros((size, size, 3))
        for c in range(3):
            a, b = rng.uniform(-1, 1, 2)
            base[..., c] = 0.5 + 0.4 * (a * xx + b * yy)
        for _ in range(int(rng.integers(2, 6))):
            y0, x0 = rng.integers(0, size - 8, 2)
            h, w = rng.integers(4, size // 2, 2)
            base[y0:y0 + h, x0:x0 + w] += rng.uniform(-0.3, 0.3, 3)
        for _ in range(int(rng.integers(2, 5))):
            y0, x0 = rng.integers(0, size - 8, 2)
            h, w = rng.integers(8, size // 2, 2)
            ky, kx = rng.choice([(np.pi, 0.0), (0.0, np.pi), (np.pi, np.pi)])
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.1, 0.25)
            stripe = amp * np.sin(ky * yi + kx * xi + phase)
            base[y0:y0 + h, x0:x0 + w] += stripe[y0:y0 + h, x0:x0 + w, None]
        img = np.clip(base * 255 + rng.normal(0, noise, base.shape), 0, 255)
        path = os.path.join(directory, f"toy{i:02d}.ppm")
        image_io.write_ppm(path, img.astype(np.uint8))
        paths.append(path)
    return paths


def _sample_batch(images: list[np.ndarray], cfg: TrainConfig,
                  rng: np.random.Generator) -> torch.Tensor:
    crops = []
    for _ in range(cfg.batch_size):
        img = images[int(rng.integers(len(images)))]
        h, w = img.shape[:2]
        if h < cfg.crop or w < cfg.crop:
            raise TrainError(f"corpus image {h}x{w} smaller than crop {cfg.crop}")
        y = int(rng.integers(h - cfg.crop + 1))
        x = int(rng.integers(w - cfg.crop + 1))
        crops.append(img[y:y + cfg.crop, x:x + cfg.crop])
    batch = np.stack(crops).transpose(0, 3, 1, 2).astype(np.float32)
    return torch.from_numpy(batch)


def train(cfg: TrainConfig, corpus_dir: str, weights_out: str | None = None,
          on_nan_dump: str | None = None):
    """Train one model; returns (CodecNet, history of (step, bpsp))."""
    torch.manual_seed(cfg.seed)
    images = load_corpus(corpus_dir)
    net = CodecNet(cfg.spec, cfg.mode, seed=cfg.seed)
    opt = torch.optim.RMSprop(net.parameters(), lr=cfg.learning_rate,
                              alpha=cfg.rmsprop_smoothing, eps=cfg.rmsprop_eps)
    rng = np.random.default_rng(cfg.seed)
    history: list[tuple[int, float]] = []
    subpixels = cfg.batch_size * 3 * cfg.crop * cfg.crop
    for step in range(1, cfg.steps + 1):
        batch = _sample_batch(images, cfg, rng)
        opt.zero_grad()
        total, _ = net.loss_bits(batch)
        loss = total / subpixels  # bpsp, keeps gradient magnitudes size-free
        if not torch.isfinite(loss):
            if on_nan_dump:
                with open(on_nan_dump, "wb") as f:
                    f.write(save_weights(net.export_weights()))
            raise TrainError(f"non-finite loss at step {step}"
                             + (f", state dumped to {on_nan_dump}" if on_nan_dump else ""))
        loss.backward()
        opt.step()
        if step % cfg.decay_interval == 0:
            for group in opt.param_groups:
                group["lr"] *= cfg.decay_factor
        if step % cfg.log_interval == 0 or step == cfg.steps:
            history.append((step, float(loss.detach())))
    if weights_out:
        with open(weights_out, "wb") as f:
            f.write(save_weights(net.export_weights()))
    return net, history


def eval_bpsp(net: CodecNet, images: list[np.ndarray], crop: int) -> float:
    """Deterministic center-crop evaluation over a corpus."""
    total_bits = 0.0
    total_sub = 0
    with torch.no_grad():
        for img in images:
            h, w = img.shape[:2]
            y, x = (h - crop) // 2, (w - crop) // 2
            t = torch.from_numpy(
                img[y:y + crop, x:x + crop].transpose(2, 0, 1)[None].astype(np.float32))
            bits, _ = net.loss_bits(t)
            total_bits += float(bits)
            total_sub += t.numel()
    return total_bits / total_sub
