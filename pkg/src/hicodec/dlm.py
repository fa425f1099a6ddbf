"""Discretized logistic mixture model.

PMFs are obtained by integrating logistic densities over width-b bins:
p(z) = sigmoid((z + b/2 - mu)/sigma) - sigmoid((z - b/2 - mu)/sigma), with
the first bin absorbing the lower tail and the last bin the upper tail.

Numeric domains:
  * 8-bit channels use a centered domain x - 127.5 with bin width 1, so a
    raw network output of zero is a neutral mean.
  * quantized latents live on the level grid in [-1, 1] with bin width
    equal to the grid spacing (1/12 for the default 25-level grid).

Mixture weights are per-channel (not shared across channels). Later image
channels condition only the mixture means on earlier channel values (weak
channel autoregression).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantizer import LevelGrid

RGB_OFFSET = 127.5
SIGMA_MIN = 1e-3
NLL_FLOOR = 2.0 ** -16  # reporting floor, mirrors the coder's count floor

_ROW_CHUNK = 64  # rows per block when building full PMF tables


def center_rgb(x):
    """Map 8-bit symbol values {0..255} into the centered real domain."""
    return np.asarray(x, dtype=np.float64) - RGB_OFFSET


@dataclass(frozen=True)
class LogisticBinSpec:
    """Bin geometry of one discretized alphabet."""

    bin_width: float
    domain_min: float
    domain_max: float
    num_bins: int

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        span = (self.domain_max - self.domain_min) / self.bin_width + 1
        if abs(span - self.num_bins) > 1e-6:
            raise ValueError("num_bins inconsistent with domain and bin width")

    @property
    def values(self) -> np.ndarray:
        return self.domain_min + self.bin_width * np.arange(self.num_bins)


def rgb_bin_spec() -> LogisticBinSpec:
    return LogisticBinSpec(1.0, -RGB_OFFSET, RGB_OFFSET, 256)


def latent_bin_spec(grid: LevelGrid) -> LogisticBinSpec:
    return LogisticBinSpec(
        grid.spacing, float(grid.levels[0]), float(grid.levels[-1]), grid.num_levels
    )


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logistic_bin_prob(target, mu, sigma, spec: LogisticBinSpec):
    """Probability of the width-b bin centered at target under one logistic.

    At the domain edges the corresponding sigmoid is replaced by 0 / 1 so
    the alphabet absorbs both tails and the PMF telescopes to exactly 1.
    """
    target = np.asarray(target, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    half = spec.bin_width / 2.0
    eps = spec.bin_width * 1e-6
    upper = np.where(target >= spec.domain_max - eps, 1.0, sigmoid((target + half - mu) / sigma))
    lower = np.where(target <= spec.domain_min + eps, 0.0, sigmoid((target - half - mu) / sigma))
    return upper - lower


@dataclass(frozen=True)
class MixtureParamsRgb:
    """Logistic mixture parameters for an 8-bit 3-channel grid.

    pi/mu/sigma: [3, K, H, W]; lam_alpha/lam_beta/lam_gamma: [K, H, W].
    mu and the lambda products live in the centered domain.
    """

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    lam_alpha: np.ndarray
    lam_beta: np.ndarray
    lam_gamma: np.ndarray

    def __post_init__(self):
        _check_mixture(self.pi, self.sigma, expected_channels=3)
        if self.mu.shape != self.pi.shape:
            raise ValueError("mu shape mismatch")
        for lam in (self.lam_alpha, self.lam_beta, self.lam_gamma):
            if lam.shape != self.pi.shape[1:]:
                raise ValueError("lambda coefficients must be [K, H, W]")

    @property
    def num_components(self) -> int:
        return self.pi.shape[1]


@dataclass(frozen=True)
class MixtureParamsLatent:
    """Logistic mixture parameters for a latent grid: pi/mu/sigma [C, K, H, W]."""

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        _check_mixture(self.pi, self.sigma)
        if self.mu.shape != self.pi.shape:
            raise ValueError("mu shape mismatch")

    @property
    def num_components(self) -> int:
        return self.pi.shape[1]


def _check_mixture(pi, sigma, expected_channels=None):
    if pi.ndim != 4:
        raise ValueError("mixture parameters must be [C, K, H, W]")
    if expected_channels is not None and pi.shape[0] != expected_channels:
        raise ValueError(f"expected {expected_channels} channels, got {pi.shape[0]}")
    if not np.allclose(pi.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("mixture weights must sum to 1 per channel/position")
    if np.any(sigma < SIGMA_MIN * (1 - 1e-9)):
        raise ValueError(f"sigma below the {SIGMA_MIN} floor")


def params_from_raw_rgb(raw: np.ndarray, num_components: int) -> MixtureParamsRgb:
    """Map a raw head tensor [3*3*K + 3*K, H, W] to constrained parameters.

    Layout: K-major blocks pi(3K), mu(3K), log-sigma(3K), lambda(3K with
    alpha, beta, gamma sub-blocks). pi via softmax over K, sigma via
    exp clamped to SIGMA_MIN, lambda via tanh.
    """
    k = num_components
    if raw.ndim != 3 or raw.shape[0] != 12 * k:
        raise ValueError(f"raw RGB head must have {12 * k} channels, got {raw.shape}")
    h, w = raw.shape[1:]
    blocks = raw.reshape(4, 3, k, h, w).astype(np.float64)
    pi = _softmax(blocks[0], axis=1)
    mu = blocks[1]
    sigma = _sigma_link(blocks[2])
    lam = np.tanh(blocks[3])
    return MixtureParamsRgb(pi, mu, sigma, lam[0], lam[1], lam[2])


def params_from_raw_latent(raw: np.ndarray, num_channels: int, num_components: int) -> MixtureParamsLatent:
    """Map a raw head tensor [3*C*K, H, W] to constrained latent parameters."""
    c, k = num_channels, num_components
    if raw.ndim != 3 or raw.shape[0] != 3 * c * k:
        raise ValueError(f"raw latent head must have {3 * c * k} channels, got {raw.shape}")
    h, w = raw.shape[1:]
    blocks = raw.reshape(3, c, k, h, w).astype(np.float64)
    pi = _softmax(blocks[0], axis=1)
    mu = blocks[1]
    sigma = _sigma_link(blocks[2])
    return MixtureParamsLatent(pi, mu, sigma)


def _softmax(x, axis):
    x = x - x.max(axis=axis, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=axis, keepdims=True)


def _sigma_link(raw):
    return np.maximum(np.exp(np.clip(raw, -40.0, 40.0)), SIGMA_MIN)


def update_means_rgb(params: MixtureParamsRgb, x1, x2) -> np.ndarray:
    """Channel-autoregressive mean update; pure, returns [3, K, H, W].

    x1, x2 are the first two channel planes [H, W] in the centered domain.
    Channel 1 means are unchanged; channel 2 adds lam_alpha * x1; channel 3
    adds lam_beta * x1 + lam_gamma * x2.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    mu = params.mu.copy()
    mu[1] = mu[1] + params.lam_alpha * x1[None]
    mu[2] = mu[2] + params.lam_beta * x1[None] + params.lam_gamma * x2[None]
    return mu


def _mixture_pmf_table(pi, mu, sigma, spec: LogisticBinSpec) -> np.ndarray:
    """Full PMF table. pi/mu/sigma: [K, H, W] -> [H, W, num_bins].

    Evaluated as differences of the mixture CDF at upper bin edges with the
    top edge pinned to 1, which both applies the edge rule and makes each
    row sum to 1 up to float rounding. Row-chunked to bound memory.
    """
    k, h, w = pi.shape
    n = spec.num_bins
    upper = spec.values + spec.bin_width / 2.0  # [n]
    out = np.empty((h, w, n), dtype=np.float64)
    for r0 in range(0, h, _ROW_CHUNK):
        r1 = min(r0 + _ROW_CHUNK, h)
        cdf = np.zeros((r1 - r0, w, n), dtype=np.float64)
        for kk in range(k):
            m = mu[kk, r0:r1, :, None]
            s = sigma[kk, r0:r1, :, None]
            cdf += pi[kk, r0:r1, :, None] * sigmoid((upper - m) / s)
        cdf[..., -1] = 1.0
        out[r0:r1, :, 0] = cdf[..., 0]
        out[r0:r1, :, 1:] = np.diff(cdf, axis=-1)
    np.clip(out, 0.0, 1.0, out=out)
    return out


def pmf_rgb(params: MixtureParamsRgb, channel: int, x1=None, x2=None) -> np.ndarray:
    """Per-position PMF over 256 values for one image channel (0-based).

    Channels 1 and 2 require the previously known channel planes (8-bit
    symbol values, [H, W]) to update the mixture means.
    """
    spec = rgb_bin_spec()
    if channel == 0:
        mu = params.mu[0]
    elif channel == 1:
        if x1 is None:
            raise ValueError("channel 1 requires the decoded channel-0 plane")
        mu = params.mu[1] + params.lam_alpha * center_rgb(x1)[None]
    elif channel == 2:
        if x1 is None or x2 is None:
            raise ValueError("channel 2 requires the decoded channel-0 and -1 planes")
        mu = (
            params.mu[2]
            + params.lam_beta * center_rgb(x1)[None]
            + params.lam_gamma * center_rgb(x2)[None]
        )
    else:
        raise ValueError("channel must be 0, 1 or 2")
    return _mixture_pmf_table(params.pi[channel], mu, params.sigma[channel], spec)


def pmf_mixture(params: MixtureParamsLatent, spec: LogisticBinSpec) -> np.ndarray:
    """Per-position PMF over spec's alphabet for a lambda-free mixture, [C, H, W, N]."""
    return np.stack(
        [
            _mixture_pmf_table(params.pi[c], params.mu[c], params.sigma[c], spec)
            for c in range(params.pi.shape[0])
        ]
    )


def pmf_latent(params: MixtureParamsLatent, grid: LevelGrid) -> np.ndarray:
    """Per-position PMF over the level alphabet, [C, H, W, L]."""
    return pmf_mixture(params, latent_bin_spec(grid))


def nll_bits(pmf: np.ndarray, symbols: np.ndarray) -> float:
    """Total -log2 p over a symbol grid; the model-side coded-size estimate.

    Probabilities are floored at 2^-16 to mirror the coder-side count floor.
    """
    symbols = np.asarray(symbols)
    if symbols.shape != pmf.shape[:-1]:
        raise ValueError("symbol grid does not match the PMF grid")
    p = np.take_along_axis(pmf, symbols[..., None].astype(np.int64), axis=-1)[..., 0]
    return float(-np.log2(np.maximum(p, NLL_FLOOR)).sum())


def _inverse_cdf_sample(pmf: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(pmf, axis=-1)
    u = rng.random(pmf.shape[:-1])
    sym = (cum < u[..., None]).sum(axis=-1)
    return np.minimum(sym, pmf.shape[-1] - 1)


def sample_latent(params: MixtureParamsLatent, grid: LevelGrid, rng: np.random.Generator) -> np.ndarray:
    """Draw level indices [C, H, W] by exact inverse-CDF sampling."""
    return _inverse_cdf_sample(pmf_latent(params, grid), rng)


def sample_rgb(params: MixtureParamsRgb, rng: np.random.Generator) -> np.ndarray:
    """Draw an 8-bit [3, H, W] grid channel-sequentially with mean updates."""
    x1 = _inverse_cdf_sample(pmf_rgb(params, 0), rng)
    x2 = _inverse_cdf_sample(pmf_rgb(params, 1, x1=x1), rng)
    x3 = _inverse_cdf_sample(pmf_rgb(params, 2, x1=x1, x2=x2), rng)
    return np.stack([x1, x2, x3]).astype(np.uint8)
