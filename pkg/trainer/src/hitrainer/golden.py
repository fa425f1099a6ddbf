"""Golden-vector bundles: frozen (weights, input, activations, container)
sets proving the trainer and the inference engine agree.

A bundle is a single .npz archive:
  crop            [H, W, 3] uint8 input
  weights         void array holding the portable weight file bytes
  container       void array holding the encoded container bytes
  z{s}            coding grid for scale s (level indices, or 8-bit values
                  for pyramid modes)
  f{s}            trunk activation for scale s, [C_f, H', W'] float32
  raw{s}          parameter head output predicting scale s-1
  nll_bits        per-scale total bits, index = scale (top = uniform cost)

Everything is reproducible from (weights, crop) alone; the parity tests
re-derive each field on both sides.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from hicodec import codec
from hicodec.model import CodecModel
from hicodec.network import MODE_LEARNED, load_weights, save_weights

from .model import CodecNet


def export_golden(net: CodecNet, crop: np.ndarray) -> dict[str, np.ndarray]:
    """Build a golden bundle from a trained net and an input crop.

    Activations come from the torch side; the container comes from the
    primary encoder running on the exported weight file, which is the
    cross-component contract the bundle freezes.
    """
    assert crop.dtype == np.uint8 and crop.ndim == 3
    weights = net.export_weights()
    weight_bytes = save_weights(weights)
    spec = net.spec

    x = torch.from_numpy(crop.transpose(2, 0, 1)[None].astype(np.float32))
    bundle: dict[str, np.ndarray] = {
        "crop": crop,
        "weights": np.frombuffer(weight_bytes, dtype=np.uint8).copy(),
    }
    with torch.no_grad():
        inputs, targets = net.hierarchy(x)
        for s in range(1, spec.num_scales + 1):
            if net.mode == MODE_LEARNED:
                levels = net.levels.to(torch.float32)
                idx = (targets[s - 1][0].unsqueeze(-1) - levels).abs().argmin(-1)
                bundle[f"z{s}"] = idx.numpy().astype(np.int64)
            else:
                bundle[f"z{s}"] = targets[s - 1][0].numpy().astype(np.uint8)
        f = None
        nll = np.zeros(spec.num_scales + 1)
        alphabet = spec.num_levels if net.mode == MODE_LEARNED else 256
        nll[spec.num_scales] = targets[-1].numel() * math.log2(alphabet)
        for s in range(spec.num_scales, 0, -1):
            f = net.run_predictor_trunk(net.dec_scale(s), inputs[s - 1], f)
            bundle[f"f{s}"] = f[0].numpy().astype(np.float32)
            if s > 1:
                raw = net.run_head(net.dec_scale(s), f)
                bundle[f"raw{s}"] = raw[0].numpy().astype(np.float32)
                if net.mode == MODE_LEARNED:
                    nll[s - 1] = float(net.latent_nll_bits(
                        raw, targets[s - 2], spec.latent_channels,
                        net.bin_width, -1.0, 1.0))
                else:
                    nll[s - 1] = float(net.latent_nll_bits(
                        raw, targets[s - 2] - 127.5, 3, 1.0, -127.5, 127.5))
        raw = net.run_head(1, f)
        bundle["raw1"] = raw[0].numpy().astype(np.float32)
        nll[0] = float(net.rgb_nll_bits(raw, x))
        bundle["nll_bits"] = nll

    model = CodecModel(weights)
    result = codec.encode_image(crop, model)
    bundle["container"] = np.frombuffer(result.data, dtype=np.uint8).copy()
    return bundle


def save_golden(path: str, bundle: dict[str, np.ndarray]) -> None:
    np.savez(path, **bundle)


def load_golden(path: str) -> dict[str, np.ndarray]:
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def reproduce_container(bundle: dict[str, np.ndarray]) -> bytes:
    """Primary-side re-encode from nothing but the bundle's weights + crop."""
    weights = load_weights(bundle["weights"].tobytes())
    return codec.encode_image(bundle["crop"], CodecModel(weights)).data
