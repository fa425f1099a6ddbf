"""Network topology, named-weight container and the portable weight format.

The hierarchy has S feature extractors (learned mode only) and S predictors.

Extractor s: stride-2 3x3 conv -> n_resblocks residual blocks -> 1x1
projection to C channels. The pre-projection feature map feeds the next
extractor; the projection is the pre-quantization latent.

Predictor s: 1x1 expand to C_f -> add the skip features from predictor s+1
-> n_resblocks residual blocks -> parallel atrous convolutions (rates
1, 2, 4) -> 1x1 to 4*C_f -> pixel shuffle x2. The result has C_f channels
at twice the input resolution; a separate 1x1 head maps it to the mixture
parameter tensor for the scale below.

Weight file format (little-endian, single flat file):
  magic "HICW" | uint16 version | uint8 mode tag |
  uint16 S, C_f, C, K, n_resblocks, num_levels | float32 sigma_q |
  uint32 tensor count | per tensor:
    uint16 name length | name (utf-8) | uint8 dtype tag (0 = float32) |
    uint8 rank | uint32 dims... | raw float32 data
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import nn

MAGIC = b"HICW"
FORMAT_VERSION = 1

MODE_LEARNED = "learned"
MODE_RGB = "rgb"
MODE_RGB_SHARED = "rgb_shared"
MODES = (MODE_LEARNED, MODE_RGB, MODE_RGB_SHARED)
_MODE_TAGS = {m: i for i, m in enumerate(MODES)}


class WeightsError(Exception):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture hyperparameters shared by all scales."""

    num_scales: int = 3  # S
    filters: int = 64  # C_f
    latent_channels: int = 5  # C
    mixture_components: int = 10  # K
    n_resblocks: int = 8
    num_levels: int = 25  # L
    sigma_q: float = 2.0

    def __post_init__(self):
        if min(self.num_scales, self.filters, self.latent_channels,
               self.mixture_components, self.num_levels) < 1 or self.n_resblocks < 0:
            raise WeightsError("invalid network spec")

    @property
    def head_channels_rgb(self) -> int:
        # pi, mu, sigma for 3 channels plus 3 lambda coefficient groups.
        return 3 * 3 * self.mixture_components + 3 * self.mixture_components

    @property
    def head_channels_latent(self) -> int:
        return 3 * self.latent_channels * self.mixture_components

    @property
    def head_channels_pyramid(self) -> int:
        # Pyramid scales are 3-channel 8-bit grids coded without lambdas.
        return 3 * 3 * self.mixture_components

    def pad_multiple(self) -> int:
        return 1 << self.num_scales


def predictor_input_channels(spec: NetworkSpec, mode: str) -> int:
    return spec.latent_channels if mode == MODE_LEARNED else 3


def predictor_scales(spec: NetworkSpec, mode: str) -> int:
    return 1 if mode == MODE_RGB_SHARED else spec.num_scales


def head_channels(spec: NetworkSpec, mode: str, scale: int) -> int:
    """Output channels of the parameter head predicting scale `scale`."""
    if scale == 0:
        return spec.head_channels_rgb
    if mode == MODE_LEARNED:
        return spec.head_channels_latent
    return spec.head_channels_pyramid


def required_tensors(spec: NetworkSpec, mode: str) -> dict[str, tuple[int, ...]]:
    """Name -> shape manifest for every tensor the architecture needs."""
    if mode not in MODES:
        raise WeightsError(f"unknown mode {mode!r}")
    cf, c = spec.filters, spec.latent_channels
    names: dict[str, tuple[int, ...]] = {}

    def add_conv(name, cout, cin, k):
        names[f"{name}.w"] = (cout, cin, k, k)
        names[f"{name}.b"] = (cout,)

    if mode == MODE_LEARNED:
        for s in range(1, spec.num_scales + 1):
            cin = 3 if s == 1 else cf
            add_conv(f"enc{s}.head", cf, cin, 3)
            for i in range(spec.n_resblocks):
                add_conv(f"enc{s}.res{i}.conv1", cf, cf, 3)
                add_conv(f"enc{s}.res{i}.conv2", cf, cf, 3)
            add_conv(f"enc{s}.proj", c, cf, 1)

    zc = predictor_input_channels(spec, mode)
    for s in range(1, predictor_scales(spec, mode) + 1):
        add_conv(f"dec{s}.in", cf, zc, 1)
        for i in range(spec.n_resblocks):
            add_conv(f"dec{s}.res{i}.conv1", cf, cf, 3)
            add_conv(f"dec{s}.res{i}.conv2", cf, cf, 3)
        for rate in (1, 2, 4):
            add_conv(f"dec{s}.atrous.r{rate}", cf, cf, 3)
        add_conv(f"dec{s}.up", 4 * cf, 3 * cf, 1)
        # The shared predictor keeps the full RGB head; latent scales use
        # only its pi/mu/sigma block.
        add_conv(f"dec{s}.head", head_channels(spec, mode, s - 1 if mode != MODE_RGB_SHARED else 0), cf, 1)
    return names


class ModelWeights:
    """Immutable named-tensor container validated against its NetworkSpec."""

    def __init__(self, spec: NetworkSpec, mode: str, tensors: dict[str, np.ndarray]):
        if mode not in MODES:
            raise WeightsError(f"unknown mode {mode!r}")
        self.spec = spec
        self.mode = mode
        self.tensors = {k: np.asarray(v, dtype=np.float32) for k, v in tensors.items()}
        self.validate()

    def validate(self) -> None:
        manifest = required_tensors(self.spec, self.mode)
        for name, shape in manifest.items():
            if name not in self.tensors:
                raise WeightsError(f"missing tensor {name!r}")
            got = self.tensors[name].shape
            if got != shape:
                raise WeightsError(f"tensor {name!r} has shape {got}, expected {shape}")
        for name in self.tensors:
            if name not in manifest:
                raise WeightsError(f"unexpected tensor {name!r}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def random_weights(spec: NetworkSpec, mode: str, rng: np.random.Generator,
                   scale: float = 1.0) -> ModelWeights:
    """He-style random initialization; used for tests and untrained baselines."""
    tensors = {}
    for name, shape in required_tensors(spec, mode).items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = scale * np.sqrt(2.0 / fan_in)
            tensors[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
    # Residual branches start at zero so every trunk begins as the identity.
    for name in tensors:
        if ".res" in name and name.endswith(".conv2.w"):
            tensors[name][:] = 0.0
    # Seed the first latent channels as 2x2 block means of the extractor
    # input. Untrained latents then carry a low-pass image summary instead
    # of noise, which keeps the entropy-vs-usefulness tradeoff from
    # collapsing the encoder early in training.
    if mode == MODE_LEARNED:
        seed_ch = min(3, spec.latent_channels, spec.filters)
        for s in range(1, spec.num_scales + 1):
            head = tensors[f"enc{s}.head.w"]
            head[:seed_ch] = 0.0
            proj = tensors[f"enc{s}.proj.w"]
            proj[:seed_ch] = 0.0
            # Jittered so block means do not sit exactly on grid levels.
            for j in range(seed_ch):
                head[j, j, 0:2, 0:2] = 0.25 * rng.normal(1.0, 0.02, (2, 2))
                proj[j, j, 0, 0] = rng.normal(1.0, 0.02)
    # Seed each predictor as a nearest-neighbor upsampler of its
    # conditioning input: 1x1 in, rate-1 atrous and the shuffle expansion
    # start as channel copies, and the head's mu rows start as a scaled
    # copy of the upsampled plane. Prediction then begins at "copy the
    # coarser scale" and training only has to refine the residual.
    k = spec.mixture_components
    zc = predictor_input_channels(spec, mode)
    copy_ch = min(3, zc, spec.filters)
    for s in range(1, predictor_scales(spec, mode) + 1):
        w_in = tensors[f"dec{s}.in.w"]
        r1 = tensors[f"dec{s}.atrous.r1.w"]
        up = tensors[f"dec{s}.up.w"]
        head = tensors[f"dec{s}.head.w"]
        for j in range(copy_ch):
            w_in[j] = 0.0
            w_in[j, j, 0, 0] = rng.normal(1.0, 0.02)
            r1[j] = 0.0
            r1[j, j, 1, 1] = rng.normal(1.0, 0.02)
            for t in range(4):
                up[4 * j + t] = 0.0
                up[4 * j + t, j, 0, 0] = rng.normal(1.0, 0.02)
        if mode == MODE_LEARNED and s > 1:
            c = spec.latent_channels
            mu_rows = [(c * k + j * k + i, j, 1.0)
                       for j in range(copy_ch) for i in range(k)]
        else:
            mu_rows = [(3 * k + j * k + i, j, 127.5)
                       for j in range(copy_ch) for i in range(k)]
        for row, j, gain in mu_rows:
            head[row] = 0.0
            head[row, j, 0, 0] = gain * rng.normal(1.0, 0.02)
    # Start the mixture scales near the coding domain width so an untrained
    # model prices symbols close to the uniform rate instead of spending
    # early training recovering from overconfident densities.
    k = spec.mixture_components
    for s in range(1, predictor_scales(spec, mode) + 1):
        bias = tensors[f"dec{s}.head.b"]
        if mode == MODE_LEARNED and s > 1:
            c = spec.latent_channels
            bias[2 * c * k:3 * c * k] = np.log(0.5)
        else:
            bias[6 * k:9 * k] = np.log(127.5 / 2.0)
    return ModelWeights(spec, mode, tensors)


def save_weights(weights: ModelWeights) -> bytes:
    spec = weights.spec
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HB", FORMAT_VERSION, _MODE_TAGS[weights.mode])
    out += struct.pack(
        "<6Hf",
        spec.num_scales, spec.filters, spec.latent_channels,
        spec.mixture_components, spec.n_resblocks, spec.num_levels,
        spec.sigma_q,
    )
    names = sorted(weights.tensors)
    out += struct.pack("<I", len(names))
    for name in names:
        arr = weights.tensors[name]
        enc = name.encode("utf-8")
        out += struct.pack("<H", len(enc)) + enc
        out += struct.pack("<BB", 0, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f4").tobytes()
    return bytes(out)


def load_weights(data: bytes) -> ModelWeights:
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise WeightsError("bad magic bytes, not a weight file")
    off = 4
    version, mode_tag = struct.unpack_from("<HB", view, off)
    off += 3
    if version != FORMAT_VERSION:
        raise WeightsError(f"unsupported weight format version {version}")
    if mode_tag >= len(MODES):
        raise WeightsError(f"unknown mode tag {mode_tag}")
    s, cf, c, k, nres, levels, sigma_q = struct.unpack_from("<6Hf", view, off)
    off += 16
    spec = NetworkSpec(s, cf, c, k, nres, levels, float(sigma_q))
    (count,) = struct.unpack_from("<I", view, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, off)
        off += 2
        name = bytes(view[off:off + name_len]).decode("utf-8")
        off += name_len
        dtype_tag, rank = struct.unpack_from("<BB", view, off)
        off += 2
        if dtype_tag != 0:
            raise WeightsError(f"tensor {name!r}: unsupported dtype tag {dtype_tag}")
        dims = struct.unpack_from(f"<{rank}I", view, off)
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(view, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
        tensors[name] = arr.copy()
    return ModelWeights(spec, MODES[mode_tag], tensors)


def _res_chain(weights: ModelWeights, prefix: str, x: np.ndarray) -> np.ndarray:
    for i in range(weights.spec.n_resblocks):
        x = nn.residual_block(
            x,
            weights[f"{prefix}.res{i}.conv1.w"], weights[f"{prefix}.res{i}.conv1.b"],
            weights[f"{prefix}.res{i}.conv2.w"], weights[f"{prefix}.res{i}.conv2.b"],
        )
    return x


def run_extractor(weights: ModelWeights, scale: int, x: np.ndarray):
    """One extractor stage. Returns (body features C_f, pre-quantization latent C).

    Input: the normalized image for scale 1, the previous stage's body
    features otherwise. Both outputs are at half the input resolution.
    """
    if x.shape[1] % 2 or x.shape[2] % 2:
        raise WeightsError(f"extractor input dims must be even, got {x.shape[1:]}")
    p = f"enc{scale}"
    t = nn.conv2d(x, weights[f"{p}.head.w"], weights[f"{p}.head.b"], stride=2)
    t = _res_chain(weights, p, t)
    zp = nn.conv2d(t, weights[f"{p}.proj.w"], weights[f"{p}.proj.b"])
    return t, zp


def run_predictor_trunk(weights: ModelWeights, scale: int, z_in: np.ndarray,
                        f_above: np.ndarray | None) -> np.ndarray:
    """Predictor trunk: features at twice the input resolution, C_f channels.

    f_above is the skip from the predictor one scale up (same dims as the
    first-layer output); None stands for the zero tensor at the top scale.
    """
    p = f"dec{scale}"
    t = nn.conv2d(z_in, weights[f"{p}.in.w"], weights[f"{p}.in.b"])
    if f_above is not None:
        if f_above.shape != t.shape:
            raise WeightsError(
                f"skip features {f_above.shape} do not match first-layer output {t.shape}"
            )
        t = t + f_above
    t = _res_chain(weights, p, t)
    a = nn.atrous_parallel(
        t,
        [
            (weights[f"{p}.atrous.r{r}.w"], weights[f"{p}.atrous.r{r}.b"])
            for r in (1, 2, 4)
        ],
    )
    u = nn.conv2d(a, weights[f"{p}.up.w"], weights[f"{p}.up.b"])
    return nn.pixel_shuffle(u, 2)


def run_head(weights: ModelWeights, scale: int, features: np.ndarray) -> np.ndarray:
    """1x1 parameter head of predictor `scale` applied to its trunk output."""
    p = f"dec{scale}"
    return nn.conv2d(features, weights[f"{p}.head.w"], weights[f"{p}.head.b"])
