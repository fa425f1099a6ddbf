import numpy as np
import torch

from hicodec.network import NetworkSpec
from hitrainer import CodecNet, grad_check, max_relative_error

SPEC = NetworkSpec(num_scales=2, filters=4, latent_channels=3,
                   mixture_components=2, n_resblocks=1)


def _input(seed, h=8, w=8):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.integers(0, 256, (1, 3, h, w)).astype(np.float32))


def test_learned_mode_all_parameter_groups():
    # Covers the soft-quantization path (through the extractors), the
    # lambda path (RGB head) and every conv/head group.
    net = CodecNet(SPEC, "learned", seed=0)
    report = grad_check(net, _input(1), entries_per_tensor=4)
    groups = set(report)
    assert any(n.startswith("enc") for n in groups)
    assert "dec1.head.w" in groups
    worst = max_relative_error(report)
    assert worst < 1e-3, report


def test_rgb_mode_predictor_groups():
    net = CodecNet(SPEC, "rgb", seed=2)
    report = grad_check(net, _input(3), entries_per_tensor=4)
    assert max_relative_error(report) < 1e-3, report


def test_shared_mode():
    net = CodecNet(SPEC, "rgb_shared", seed=4)
    report = grad_check(net, _input(5), entries_per_tensor=3)
    assert max_relative_error(report) < 1e-3, report


def test_lambda_entries_specifically():
    # The lambda block is the last 3K channels of the RGB head; perturb
    # entries of those output channels directly.
    net = CodecNet(SPEC, "learned", seed=6).double()
    x = _input(7).double()

    def forward():
        total, _ = net.loss_bits(x, quantization="soft")
        return total

    net.zero_grad()
    forward().backward()
    w = net.tensor("dec1.head.w")
    k = SPEC.mixture_components
    step = 1e-5
    for out_ch in range(9 * k, 12 * k):  # lambda rows
        orig = float(w.data[out_ch, 0, 0, 0])
        with torch.no_grad():
            w.data[out_ch, 0, 0, 0] = orig + step
            up = float(forward())
            w.data[out_ch, 0, 0, 0] = orig - step
            down = float(forward())
            w.data[out_ch, 0, 0, 0] = orig
        numeric = (up - down) / (2 * step)
        analytic = float(w.grad[out_ch, 0, 0, 0])
        assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-4) < 1e-3
