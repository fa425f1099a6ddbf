"""Hierarchical encode/decode pipeline and the container bitstream format.

Container layout (all integers little-endian):

    magic "HICC" | uint16 version | uint8 mode tag | uint8 S |
    uint8 stored-scale mask (bit s set = scale s stored, bit 0 = the image) |
    uint32 original H, W | uint32 padded H, W |
    uint32 CRC-32 of the original pixel data |
    uint64 full payload bits (cost of storing every scale) |
    then one sub-stream per stored scale, ordered s = S down to 0:
        uint16 C, H', W' | uint32 payload byte length | payload

Within a scale, channels are coded in order with implicit boundaries; the
8-bit image scale is coded channel plane by channel plane with the
autoregressive mean updates between planes. The top scale z^(S) is coded
under the uniform prior. Encoder and decoder build bit-identical integer
CDFs from the same forward pass, which is the lossless contract; a debug
mode hashes every CDF grid on both sides for verification.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import dlm
from .coder import (
    PRECISION_BITS,
    Bitstream,
    RangeDecoder,
    RangeEncoder,
    quantize_pmf_counts,
    uniform_cdf,
)
from .model import CodecModel
from .network import MODES

MAGIC = b"HICC"
CONTAINER_VERSION = 1
_HEADER_FMT = "<HBBBIIIIIQ"  # after magic
_TRIPLET_FMT = "<HHHI"  # C, H', W', payload length

_ROW_CHUNK = 64  # rows per CDF-construction block on the 8-bit scale


class CodecError(Exception):
    pass


class ContainerFormatError(CodecError):
    pass


class ChecksumError(CodecError):
    pass


@dataclass
class Header:
    mode: str
    num_scales: int
    scale_mask: int
    orig_h: int
    orig_w: int
    padded_h: int
    padded_w: int
    checksum: int
    full_payload_bits: int


@dataclass
class ScaleStats:
    scale: int
    num_symbols: int
    payload_bits: int
    nll_bits: float
    stored: bool


@dataclass
class EncodeResult:
    data: bytes
    header: Header
    scales: list[ScaleStats]
    cdf_hashes: list[str] = field(default_factory=list)

    @property
    def payload_bits(self) -> int:
        return sum(s.payload_bits for s in self.scales if s.stored)

    @property
    def header_bits(self) -> int:
        return 8 * len(self.data) - self.payload_bits


@dataclass
class DecodeResult:
    image: np.ndarray
    header: Header
    stage_evals: int
    cdf_hashes: list[str] = field(default_factory=list)


@dataclass
class SampleResult:
    image: np.ndarray
    header: Header
    stored_bits: int
    stored_fraction: float
    sampled_scales: list[int]


def bpsp(data: bytes, height: int, width: int) -> float:
    """Bits per sub-pixel of a compressed representation of an HxW RGB image."""
    return 8.0 * len(data) / (3.0 * height * width)


def pad_image(image: np.ndarray, multiple: int) -> np.ndarray:
    """Replicate-pad right/bottom so both dims are multiples of `multiple`."""
    h, w = image.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return image
    return np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="edge")


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise CodecError("expected an [H, W, 3] uint8 image")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise CodecError("image must be at least 1x1")
    return image


def _cum_rows(counts: np.ndarray) -> np.ndarray:
    """[N, L] counts -> [N, L+1] cumulative rows."""
    cum = np.zeros((counts.shape[0], counts.shape[1] + 1), dtype=np.int64)
    np.cumsum(counts, axis=1, out=cum[:, 1:])
    return cum


class _CdfHasher:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.hashes: list[str] = []
        self._h = None

    def start(self):
        if self.enabled:
            self._h = hashlib.sha256()

    def update(self, counts: np.ndarray):
        if self.enabled:
            self._h.update(np.ascontiguousarray(counts).tobytes())

    def finish(self):
        if self.enabled:
            self.hashes.append(self._h.hexdigest())


def _encode_rows(enc: RangeEncoder, cum: np.ndarray, syms: np.ndarray) -> None:
    idx = syms.reshape(-1, 1).astype(np.int64)
    lo = np.take_along_axis(cum, idx, axis=1)[:, 0].tolist()
    hi = np.take_along_axis(cum, idx + 1, axis=1)[:, 0].tolist()
    raw = enc._encode_raw
    for a, b in zip(lo, hi):
        raw(a, b, PRECISION_BITS)


def _decode_rows(dec: RangeDecoder, cum: np.ndarray) -> np.ndarray:
    out = np.empty(cum.shape[0], dtype=np.int64)
    locate = dec._locate
    update = dec._decode_update
    for i in range(cum.shape[0]):
        sym, lo, hi = locate(cum[i], PRECISION_BITS)
        update(lo, hi, PRECISION_BITS)
        out[i] = sym
    return out


def _encode_uniform(enc: RangeEncoder, syms: np.ndarray, alphabet: int) -> None:
    cum = uniform_cdf(alphabet).cumulative.tolist()
    raw = enc._encode_raw
    for s in syms.reshape(-1).tolist():
        raw(cum[s], cum[s + 1], PRECISION_BITS)


def _decode_uniform(dec: RangeDecoder, count: int, alphabet: int) -> np.ndarray:
    cum = uniform_cdf(alphabet).cumulative
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        sym, lo, hi = dec._locate(cum, PRECISION_BITS)
        dec._decode_update(lo, hi, PRECISION_BITS)
        out[i] = sym
    return out


def _rgb_chunk_pmf(params: dlm.MixtureParamsRgb, channel: int,
                   x1c: np.ndarray | None, x2c: np.ndarray | None,
                   r0: int, r1: int) -> np.ndarray:
    """PMF rows [r0:r1, W, 256] with autoregressive mean updates applied."""
    pi = params.pi[channel][:, r0:r1]
    sigma = params.sigma[channel][:, r0:r1]
    mu = params.mu[channel][:, r0:r1]
    if channel == 1:
        mu = mu + params.lam_alpha[:, r0:r1] * x1c[None, r0:r1]
    elif channel == 2:
        mu = mu + params.lam_beta[:, r0:r1] * x1c[None, r0:r1] \
                + params.lam_gamma[:, r0:r1] * x2c[None, r0:r1]
    return dlm._mixture_pmf_table(pi, mu, sigma, dlm.rgb_bin_spec())


def _code_rgb_scale(params: dlm.MixtureParamsRgb, planes: np.ndarray | None,
                    enc: RangeEncoder | None, dec: RangeDecoder | None,
                    hasher: _CdfHasher) -> tuple[np.ndarray, float]:
    """Shared channel-sequential walk for the 8-bit scale.

    Encoding when `enc` is set (planes are the true [3, H, W] values),
    decoding when `dec` is set. Returns (planes, nll_bits).
    """
    h, w = params.pi.shape[2:]
    if dec is not None:
        planes = np.zeros((3, h, w), dtype=np.int64)
    nll = 0.0
    x1c = x2c = None
    for c in range(3):
        hasher.start()
        for r0 in range(0, h, _ROW_CHUNK):
            r1 = min(r0 + _ROW_CHUNK, h)
            pmf = _rgb_chunk_pmf(params, c, x1c, x2c, r0, r1).reshape(-1, 256)
            counts = quantize_pmf_counts(pmf)
            hasher.update(counts)
            cum = _cum_rows(counts)
            if enc is not None:
                syms = planes[c, r0:r1].reshape(-1)
                _encode_rows(enc, cum, syms)
            else:
                syms = _decode_rows(dec, cum)
                planes[c, r0:r1] = syms.reshape(r1 - r0, w)
            p = np.take_along_axis(pmf, syms.reshape(-1, 1), axis=1)
            nll += float(-np.log2(np.maximum(p, dlm.NLL_FLOOR)).sum())
        hasher.finish()
        if c == 0:
            x1c = dlm.center_rgb(planes[0])
        elif c == 1:
            x2c = dlm.center_rgb(planes[1])
    return planes, nll


def _code_latent_scale(pmf: np.ndarray, grids: np.ndarray | None,
                       enc: RangeEncoder | None, dec: RangeDecoder | None,
                       hasher: _CdfHasher) -> tuple[np.ndarray, float]:
    """Channel-ordered coding of a latent grid against its PMF [C, H, W, L]."""
    c, h, w, n = pmf.shape
    if dec is not None:
        grids = np.empty((c, h, w), dtype=np.int64)
    nll = 0.0
    for ch in range(c):
        flat = pmf[ch].reshape(-1, n)
        counts = quantize_pmf_counts(flat)
        hasher.start()
        hasher.update(counts)
        hasher.finish()
        cum = _cum_rows(counts)
        if enc is not None:
            syms = grids[ch].reshape(-1)
            _encode_rows(enc, cum, syms)
        else:
            syms = _decode_rows(dec, cum)
            grids[ch] = syms.reshape(h, w)
        p = np.take_along_axis(flat, syms.reshape(-1, 1), axis=1)
        nll += float(-np.log2(np.maximum(p, dlm.NLL_FLOOR)).sum())
    return grids, nll


def encode_image(image: np.ndarray, model: CodecModel,
                 store_scales: set[int] | None = None,
                 debug_cdf: bool = False) -> EncodeResult:
    """Encode an 8-bit RGB image of any size >= 1x1.

    store_scales: subset of {0..S} to include in the container (default
    all); the top scale S is always required. Every scale is still coded so
    the header can carry the full-bitstream cost for sampling reports.
    """
    image = _check_image(image)
    spec = model.spec
    s_max = spec.num_scales
    if store_scales is None:
        store_scales = set(range(s_max + 1))
    if s_max not in store_scales:
        raise CodecError("the top scale must always be stored")
    if not store_scales <= set(range(s_max + 1)):
        raise CodecError(f"store_scales must be within 0..{s_max}")

    padded = pad_image(image, spec.pad_multiple())
    grids = model.latent_grids(padded)  # z^(1)..z^(S)
    hasher = _CdfHasher(debug_cdf)

    model.reset_stage_counter()
    payloads: dict[int, bytes] = {}
    stats: list[ScaleStats] = []

    # Top scale under the uniform prior.
    enc = RangeEncoder()
    top = grids[s_max - 1]
    alphabet = model.alphabet_size(s_max)
    _encode_uniform(enc, top, alphabet)
    payloads[s_max] = enc.finish().data
    stats.append(ScaleStats(s_max, top.size, 8 * len(payloads[s_max]),
                            top.size * float(np.log2(alphabet)), s_max in store_scales))

    f = None
    for s in range(s_max, 0, -1):
        f, params = model.predict_scale(s, grids[s - 1], f)
        if s > 1:
            pmf = dlm.pmf_mixture(params, model.scale_bin_spec(s - 1))
            enc = RangeEncoder()
            _, nll = _code_latent_scale(pmf, grids[s - 2], enc, None, hasher)
            payloads[s - 1] = enc.finish().data
            stats.append(ScaleStats(s - 1, grids[s - 2].size, 8 * len(payloads[s - 1]),
                                    nll, (s - 1) in store_scales))

    rgb_params = model.rgb_params(f)
    planes = padded.transpose(2, 0, 1).astype(np.int64)
    enc = RangeEncoder()
    _, nll = _code_rgb_scale(rgb_params, planes, enc, None, hasher)
    payloads[0] = enc.finish().data
    stats.append(ScaleStats(0, planes.size, 8 * len(payloads[0]), nll, 0 in store_scales))

    scale_mask = sum(1 << s for s in store_scales)
    full_bits = sum(8 * len(p) for p in payloads.values())
    header = Header(model.mode, s_max, scale_mask,
                    image.shape[0], image.shape[1],
                    padded.shape[0], padded.shape[1],
                    zlib.crc32(image.tobytes()), full_bits)

    out = bytearray()
    out += MAGIC
    out += struct.pack(_HEADER_FMT, CONTAINER_VERSION, MODES.index(model.mode),
                       s_max, scale_mask, header.orig_h, header.orig_w,
                       header.padded_h, header.padded_w, header.checksum, full_bits)
    for s in range(s_max, -1, -1):
        if s not in store_scales:
            continue
        if s == 0:
            c, hh, ww = 3, header.padded_h, header.padded_w
        else:
            c = model.latent_channels()
            hh, ww = header.padded_h >> s, header.padded_w >> s
        out += struct.pack(_TRIPLET_FMT, c, hh, ww, len(payloads[s]))
        out += payloads[s]

    stats.sort(key=lambda t: -t.scale)
    return EncodeResult(bytes(out), header, stats, hasher.hashes)


def parse_header(data: bytes) -> tuple[Header, int]:
    if data[:4] != MAGIC:
        raise ContainerFormatError("bad magic bytes, not a container")
    try:
        fields = struct.unpack_from(_HEADER_FMT, data, 4)
    except struct.error as e:
        raise ContainerFormatError(f"truncated header: {e}") from None
    version, mode_tag, s_max, mask, oh, ow, ph, pw, crc, full_bits = fields
    if version != CONTAINER_VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")
    if mode_tag >= len(MODES):
        raise ContainerFormatError(f"unknown mode tag {mode_tag}")
    header = Header(MODES[mode_tag], s_max, mask, oh, ow, ph, pw, crc, full_bits)
    return header, 4 + struct.calcsize(_HEADER_FMT)


def _read_substreams(data: bytes, header: Header) -> dict[int, tuple[tuple[int, int, int], bytes]]:
    _, off = parse_header(data)
    streams = {}
    for s in range(header.num_scales, -1, -1):
        if not header.scale_mask & (1 << s):
            continue
        try:
            c, hh, ww, length = struct.unpack_from(_TRIPLET_FMT, data, off)
        except struct.error:
            raise ContainerFormatError(f"truncated sub-stream table at scale {s}") from None
        off += struct.calcsize(_TRIPLET_FMT)
        payload = data[off:off + length]
        if len(payload) != length:
            raise ContainerFormatError(f"truncated payload for scale {s}")
        off += length
        streams[s] = ((c, hh, ww), payload)
    return streams


def inspect_container(data: bytes) -> dict:
    """Header and sub-stream table without running any network."""
    header, _ = parse_header(data)
    streams = _read_substreams(data, header)
    return {
        "mode": header.mode,
        "num_scales": header.num_scales,
        "stored_scales": sorted(s for s in streams),
        "original_size": [header.orig_h, header.orig_w],
        "padded_size": [header.padded_h, header.padded_w],
        "checksum": header.checksum,
        "full_payload_bits": header.full_payload_bits,
        "total_bytes": len(data),
        "bpsp": bpsp(data, header.orig_h, header.orig_w),
        "substreams": [
            {"scale": s, "channels": dims[0], "height": dims[1], "width": dims[2],
             "payload_bytes": len(payload)}
            for s, (dims, payload) in sorted(streams.items(), reverse=True)
        ],
    }


def _validate_dims(header: Header, model: CodecModel,
                   streams: dict[int, tuple[tuple[int, int, int], bytes]]) -> None:
    spec = model.spec
    if header.mode != model.mode:
        raise CodecError(f"container mode {header.mode!r} does not match model {model.mode!r}")
    if header.num_scales != spec.num_scales:
        raise CodecError("container scale count does not match the model")
    mult = spec.pad_multiple()
    if header.padded_h % mult or header.padded_w % mult:
        raise ContainerFormatError("padded dims are not a multiple of 2^S")
    for s, (dims, _) in streams.items():
        if s == 0:
            expect = (3, header.padded_h, header.padded_w)
        else:
            expect = (model.latent_channels(), header.padded_h >> s, header.padded_w >> s)
        if dims != expect:
            raise ContainerFormatError(
                f"scale {s} dimension triplet {dims} inconsistent, expected {expect}"
            )


def _hierarchy_decode(streams, header: Header, model: CodecModel,
                      rng: np.random.Generator | None, hasher: _CdfHasher):
    """Top-down pass shared by decode and sampling.

    Scales present in `streams` are arithmetic-decoded; missing ones are
    sampled from the predicted mixtures (rng required). Returns the padded
    [3, H, W] planes and the list of sampled scales.
    """
    s_max = header.num_scales
    sampled: list[int] = []
    model.reset_stage_counter()

    (c, hh, ww), payload = streams[s_max]
    dec = RangeDecoder(Bitstream(payload))
    grid = _decode_uniform(dec, c * hh * ww, model.alphabet_size(s_max)).reshape(c, hh, ww)

    f = None
    for s in range(s_max, 0, -1):
        f, params = model.predict_scale(s, grid, f)
        if s > 1:
            spec_bins = model.scale_bin_spec(s - 1)
            if (s - 1) in streams:
                pmf = dlm.pmf_mixture(params, spec_bins)
                dec = RangeDecoder(Bitstream(streams[s - 1][1]))
                grid, _ = _code_latent_scale(pmf, None, None, dec, hasher)
            else:
                sampled.append(s - 1)
                pmf = dlm.pmf_mixture(params, spec_bins)
                grid = dlm._inverse_cdf_sample(pmf, rng)

    rgb_params = model.rgb_params(f)
    if 0 in streams:
        dec = RangeDecoder(Bitstream(streams[0][1]))
        planes, _ = _code_rgb_scale(rgb_params, None, None, dec, hasher)
    else:
        sampled.append(0)
        planes = dlm.sample_rgb(rgb_params, rng).astype(np.int64)
    return planes, sampled


def _planes_to_image(planes: np.ndarray, header: Header) -> np.ndarray:
    img = planes.astype(np.uint8).transpose(1, 2, 0)
    return np.ascontiguousarray(img[: header.orig_h, : header.orig_w])


def decode_image(data: bytes, model: CodecModel, debug_cdf: bool = False) -> DecodeResult:
    """Decode a fully-stored container back to the original image."""
    header, _ = parse_header(data)
    streams = _read_substreams(data, header)
    if set(streams) != set(range(header.num_scales + 1)):
        raise CodecError("container does not store all scales; use sample_image")
    _validate_dims(header, model, streams)
    hasher = _CdfHasher(debug_cdf)
    planes, _ = _hierarchy_decode(streams, header, model, None, hasher)
    image = _planes_to_image(planes, header)
    if zlib.crc32(image.tobytes()) != header.checksum:
        raise ChecksumError("decoded image fails the stored checksum "
                            "(wrong weights or corrupted container)")
    return DecodeResult(image, header, model.stage_evals, hasher.hashes)


def sample_image(data: bytes, model: CodecModel, seed: int) -> SampleResult:
    """Decode stored scales and sample the missing ones from the model."""
    header, _ = parse_header(data)
    streams = _read_substreams(data, header)
    if header.num_scales not in streams:
        raise CodecError("the top scale is required for sampling")
    _validate_dims(header, model, streams)
    rng = np.random.default_rng(seed)
    planes, sampled = _hierarchy_decode(streams, header, model, rng, _CdfHasher(False))
    image = _planes_to_image(planes, header)
    if not sampled and zlib.crc32(image.tobytes()) != header.checksum:
        raise ChecksumError("decoded image fails the stored checksum")
    stored_bits = sum(8 * len(p) for _, p in streams.values())
    fraction = stored_bits / header.full_payload_bits if header.full_payload_bits else 1.0
    return SampleResult(image, header, stored_bits, fraction, sorted(sampled))
