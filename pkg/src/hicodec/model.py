"""Codec-facing model: weights + mode + forward-pass plumbing.

A stage evaluation is one predictor trunk pass (its latent parameter head
included) or the final 8-bit-scale parameter head; decoding an S-scale
hierarchy therefore costs exactly S + 1 stages. The counter on this class
instruments that contract.
"""

from __future__ import annotations

import numpy as np

from . import dlm, network, pyramid
from .network import (
    MODE_LEARNED,
    MODE_RGB,
    MODE_RGB_SHARED,
    ModelWeights,
    NetworkSpec,
    WeightsError,
)
from .quantizer import LevelGrid, make_levels, quantize_hard


class CodecModel:
    def __init__(self, weights: ModelWeights):
        self.weights = weights
        self.spec = weights.spec
        self.mode = weights.mode
        self.grid = LevelGrid(make_levels(self.spec.num_levels), self.spec.sigma_q)
        self.stage_evals = 0

    # -- inputs ------------------------------------------------------------

    @staticmethod
    def normalize_image(image: np.ndarray) -> np.ndarray:
        """[H, W, 3] uint8 -> [3, H, W] float32 in [-1, 1]."""
        x = image.astype(np.float32).transpose(2, 0, 1)
        return x / 127.5 - 1.0

    def latent_grids(self, padded: np.ndarray) -> list[np.ndarray]:
        """Symbol grids z^(1)..z^(S) for a padded image.

        Learned mode: level indices [C, H', W'] from the extractor chain.
        Pyramid modes: 8-bit values [3, H', W'] of the bicubic levels.
        """
        if self.mode == MODE_LEARNED:
            feat = self.normalize_image(padded)
            grids = []
            for s in range(1, self.spec.num_scales + 1):
                feat, zp = network.run_extractor(self.weights, s, feat)
                idx, _ = quantize_hard(zp, self.grid)
                grids.append(idx)
            return grids
        levels = pyramid.rgb_pyramid(padded, self.spec.num_scales)
        return [lv.transpose(2, 0, 1).copy() for lv in levels[1:]]

    def predictor_input(self, z_grid: np.ndarray) -> np.ndarray:
        """Map a symbol grid to the predictor's real-valued input tensor."""
        if self.mode == MODE_LEARNED:
            return self.grid.levels[z_grid].astype(np.float32)
        return z_grid.astype(np.float32) / 127.5 - 1.0

    def alphabet_size(self, scale: int) -> int:
        if scale == 0 or self.mode != MODE_LEARNED:
            return 256
        return self.spec.num_levels

    def latent_channels(self) -> int:
        return self.spec.latent_channels if self.mode == MODE_LEARNED else 3

    # -- stages ------------------------------------------------------------

    def _dec_scale(self, scale: int) -> int:
        return 1 if self.mode == MODE_RGB_SHARED else scale

    def predict_scale(self, scale: int, z_grid: np.ndarray, f_above: np.ndarray | None):
        """One predictor stage for scale `scale`.

        Returns (features for scale-1, latent mixture params for scale-1 or
        None when scale == 1, where the separate 8-bit head applies).
        """
        self.stage_evals += 1
        d = self._dec_scale(scale)
        f = network.run_predictor_trunk(
            self.weights, d, self.predictor_input(z_grid), f_above
        )
        if scale == 1:
            return f, None
        raw = network.run_head(self.weights, d, f)
        k = self.spec.mixture_components
        if self.mode == MODE_LEARNED:
            params = dlm.params_from_raw_latent(raw, self.spec.latent_channels, k)
        else:
            # Pyramid scales reuse the pi/mu/sigma block; the shared
            # predictor's lambda block is unused above scale 0.
            params = dlm.params_from_raw_latent(raw[: 9 * k], 3, k)
        return f, params

    def rgb_params(self, features: np.ndarray) -> dlm.MixtureParamsRgb:
        """The 8-bit-scale parameter head; counted as its own stage."""
        self.stage_evals += 1
        raw = network.run_head(self.weights, 1, features)
        return dlm.params_from_raw_rgb(raw, self.spec.mixture_components)

    def scale_bin_spec(self, scale: int) -> dlm.LogisticBinSpec:
        if scale == 0 or self.mode != MODE_LEARNED:
            return dlm.rgb_bin_spec()
        return dlm.latent_bin_spec(self.grid)

    def reset_stage_counter(self) -> None:
        self.stage_evals = 0


def build_baseline(kind: str, weights: ModelWeights) -> CodecModel:
    """Wire a pyramid baseline; validates the predictor count for the kind."""
    if kind not in (MODE_RGB, MODE_RGB_SHARED):
        raise WeightsError(f"unknown baseline kind {kind!r}")
    if weights.mode != kind:
        raise WeightsError(f"weights are for mode {weights.mode!r}, not {kind!r}")
    expected = 1 if kind == MODE_RGB_SHARED else weights.spec.num_scales
    got = {int(n.split(".", 1)[0][3:]) for n in weights.tensors if n.startswith("dec")}
    if got != set(range(1, expected + 1)):
        raise WeightsError(f"{kind} needs predictors 1..{expected}, found {sorted(got)}")
    return CodecModel(weights)


def random_model(spec: NetworkSpec, mode: str, rng: np.random.Generator,
                 scale: float = 1.0) -> CodecModel:
    return CodecModel(network.random_weights(spec, mode, rng, scale))
