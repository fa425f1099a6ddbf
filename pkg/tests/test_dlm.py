import math

import numpy as np
import pytest

from hicodec import dlm
from hicodec.coder import RangeDecoder, RangeEncoder, quantize_pmf
from hicodec.quantizer import LevelGrid


def brute_force_mixture_pmf(pi, mu, sigma, spec):
    """Direct per-bin evaluation of the mixture PMF, scalar loops only."""
    k = len(pi)
    values = [spec.domain_min + spec.bin_width * j for j in range(spec.num_bins)]
    out = []
    for v in values:
        p = 0.0
        for kk in range(k):
            hi = v + spec.bin_width / 2
            lo = v - spec.bin_width / 2
            up = 1.0 if v >= spec.domain_max - 1e-9 else 1 / (1 + math.exp(-(hi - mu[kk]) / sigma[kk]))
            lw = 0.0 if v <= spec.domain_min + 1e-9 else 1 / (1 + math.exp(-(lo - mu[kk]) / sigma[kk]))
            p += pi[kk] * (up - lw)
        out.append(p)
    return np.array(out)


def random_rgb_params(rng, k, h, w):
    pi = rng.random((3, k, h, w)) + 0.1
    pi /= pi.sum(axis=1, keepdims=True)
    mu = rng.normal(0, 40, (3, k, h, w))
    sigma = np.exp(rng.normal(1.5, 1, (3, k, h, w))) + dlm.SIGMA_MIN
    lam = rng.uniform(-1, 1, (3, k, h, w))
    return dlm.MixtureParamsRgb(pi, mu, sigma, lam[0], lam[1], lam[2])


def random_latent_params(rng, c, k, h, w):
    pi = rng.random((c, k, h, w)) + 0.1
    pi /= pi.sum(axis=1, keepdims=True)
    mu = rng.uniform(-1, 1, (c, k, h, w))
    sigma = np.exp(rng.normal(-2, 1, (c, k, h, w))) + dlm.SIGMA_MIN
    return dlm.MixtureParamsLatent(pi, mu, sigma)


class TestLogisticBinProb:
    def test_full_alphabet_sums_to_one(self):
        rng = np.random.default_rng(0)
        spec = dlm.rgb_bin_spec()
        for _ in range(50):
            mu = rng.normal(0, 200)
            sigma = np.exp(rng.normal(0, 3)) + 1e-3
            total = sum(dlm.logistic_bin_prob(v, mu, sigma, spec) for v in spec.values)
            assert abs(total - 1.0) < 1e-9

    def test_centered_value_unit_scale(self):
        spec = dlm.rgb_bin_spec()
        got = dlm.logistic_bin_prob(0.5, mu=0.5, sigma=1.0, spec=spec)
        expected = 2 / (1 + math.exp(-0.5)) - 1  # 2*sigmoid(1/2) - 1
        assert abs(got - expected) < 1e-12
        assert abs(expected - 0.244919) < 1e-6

    def test_mu_below_domain_puts_mass_on_edge(self):
        spec = dlm.rgb_bin_spec()
        p_edge = dlm.logistic_bin_prob(spec.domain_min, mu=-4000.0, sigma=1.0, spec=spec)
        assert p_edge > 1 - 1e-12

    def test_latent_spec_geometry(self):
        grid = LevelGrid()
        spec = dlm.latent_bin_spec(grid)
        assert spec.num_bins == 25
        assert abs(spec.bin_width - 1 / 12) < 1e-12
        total = sum(dlm.logistic_bin_prob(v, 0.3, 0.05, spec) for v in spec.values)
        assert abs(total - 1.0) < 1e-9


class TestUpdateMeans:
    def test_zero_lambdas_identity(self):
        rng = np.random.default_rng(1)
        p = random_rgb_params(rng, 4, 3, 5)
        zero = dlm.MixtureParamsRgb(p.pi, p.mu, p.sigma,
                                    np.zeros_like(p.lam_alpha),
                                    np.zeros_like(p.lam_beta),
                                    np.zeros_like(p.lam_gamma))
        x1 = rng.normal(0, 50, (3, 5))
        x2 = rng.normal(0, 50, (3, 5))
        assert np.array_equal(dlm.update_means_rgb(zero, x1, x2), zero.mu)

    def test_direct_formula_example(self):
        k, h, w = 1, 1, 1
        p = dlm.MixtureParamsRgb(
            np.ones((3, k, h, w)), np.zeros((3, k, h, w)), np.ones((3, k, h, w)),
            np.full((k, h, w), 0.5), np.zeros((k, h, w)), np.zeros((k, h, w)))
        mu = dlm.update_means_rgb(p, np.full((h, w), 100.0), np.zeros((h, w)))
        assert mu[1, 0, 0, 0] == pytest.approx(50.0)

    def test_channel0_mean_always_unchanged(self):
        rng = np.random.default_rng(2)
        p = random_rgb_params(rng, 3, 4, 4)
        mu = dlm.update_means_rgb(p, rng.normal(0, 9, (4, 4)), rng.normal(0, 9, (4, 4)))
        assert np.array_equal(mu[0], p.mu[0])

    def test_scalar_reference_oracle(self):
        rng = np.random.default_rng(3)
        k, h, w = 3, 4, 6
        p = random_rgb_params(rng, k, h, w)
        x1 = rng.normal(0, 60, (h, w))
        x2 = rng.normal(0, 60, (h, w))
        mu = dlm.update_means_rgb(p, x1, x2)
        for kk in range(k):
            for u in range(h):
                for v in range(w):
                    assert mu[1, kk, u, v] == pytest.approx(
                        p.mu[1, kk, u, v] + p.lam_alpha[kk, u, v] * x1[u, v])
                    assert mu[2, kk, u, v] == pytest.approx(
                        p.mu[2, kk, u, v] + p.lam_beta[kk, u, v] * x1[u, v]
                        + p.lam_gamma[kk, u, v] * x2[u, v])
        assert np.array_equal(p.mu[1], p.mu[1])  # inputs untouched


class TestPmfRgb:
    def test_single_component_no_lambda_is_plain_logistic(self):
        rng = np.random.default_rng(4)
        k, h, w = 1, 3, 3
        pi = np.ones((3, k, h, w))
        mu = rng.normal(0, 30, (3, k, h, w))
        sigma = np.exp(rng.normal(1, 0.5, (3, k, h, w)))
        zeros = np.zeros((k, h, w))
        p = dlm.MixtureParamsRgb(pi, mu, sigma, zeros, zeros, zeros)
        pmf = dlm.pmf_rgb(p, 0)
        spec = dlm.rgb_bin_spec()
        for u in range(h):
            for v in range(w):
                direct = dlm.logistic_bin_prob(spec.values, mu[0, 0, u, v], sigma[0, 0, u, v], spec)
                np.testing.assert_allclose(pmf[u, v], direct, atol=1e-12)

    def test_two_identical_components_collapse(self):
        rng = np.random.default_rng(5)
        h, w = 2, 2
        mu1 = rng.normal(0, 20, (3, 1, h, w))
        sig1 = np.exp(rng.normal(0.5, 0.3, (3, 1, h, w)))
        zeros1 = np.zeros((1, h, w))
        single = dlm.MixtureParamsRgb(np.ones((3, 1, h, w)), mu1, sig1, zeros1, zeros1, zeros1)
        dup = dlm.MixtureParamsRgb(
            np.full((3, 2, h, w), 0.5), np.repeat(mu1, 2, 1), np.repeat(sig1, 2, 1),
            np.zeros((2, h, w)), np.zeros((2, h, w)), np.zeros((2, h, w)))
        np.testing.assert_allclose(dlm.pmf_rgb(dup, 0), dlm.pmf_rgb(single, 0), atol=1e-12)

    def test_brute_force_oracle_k3(self):
        rng = np.random.default_rng(6)
        k, h, w = 3, 3, 4
        p = random_rgb_params(rng, k, h, w)
        x1 = rng.integers(0, 256, (h, w))
        x2 = rng.integers(0, 256, (h, w))
        spec = dlm.rgb_bin_spec()
        for channel, kwargs in ((0, {}), (1, {"x1": x1}), (2, {"x1": x1, "x2": x2})):
            pmf = dlm.pmf_rgb(p, channel, **kwargs)
            mu = dlm.update_means_rgb(p, dlm.center_rgb(x1), dlm.center_rgb(x2))
            for u in range(h):
                for v in range(w):
                    ref = brute_force_mixture_pmf(
                        p.pi[channel, :, u, v], mu[channel, :, u, v],
                        p.sigma[channel, :, u, v], spec)
                    np.testing.assert_allclose(pmf[u, v], ref, atol=1e-9)

    def test_channel_availability_enforced(self):
        p = random_rgb_params(np.random.default_rng(7), 2, 2, 2)
        with pytest.raises(ValueError):
            dlm.pmf_rgb(p, 1)
        with pytest.raises(ValueError):
            dlm.pmf_rgb(p, 2, x1=np.zeros((2, 2)))

    def test_component_permutation_invariance(self):
        rng = np.random.default_rng(8)
        p = random_rgb_params(rng, 4, 2, 3)
        perm = [2, 0, 3, 1]
        q = dlm.MixtureParamsRgb(p.pi[:, perm], p.mu[:, perm], p.sigma[:, perm],
                                 p.lam_alpha[perm], p.lam_beta[perm], p.lam_gamma[perm])
        np.testing.assert_allclose(dlm.pmf_rgb(p, 0), dlm.pmf_rgb(q, 0), atol=1e-12)


class TestPmfLatent:
    def test_normalization_random_parameters(self):
        rng = np.random.default_rng(9)
        p = random_latent_params(rng, 5, 4, 6, 7)
        pmf = dlm.pmf_latent(p, LevelGrid())
        np.testing.assert_allclose(pmf.sum(-1), 1.0, atol=1e-6)

    def test_concentration_one_hot(self):
        grid = LevelGrid()
        c, k, h, w = 1, 1, 1, 1
        j = 17
        p = dlm.MixtureParamsLatent(
            np.ones((c, k, h, w)),
            np.full((c, k, h, w), grid.levels[j]),
            np.full((c, k, h, w), 1e-3))
        pmf = dlm.pmf_latent(p, grid)[0, 0, 0]
        assert pmf[j] > 1 - 1e-9
        assert np.argmax(pmf) == j

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(10)
        grid = LevelGrid()
        p = random_latent_params(rng, 2, 3, 2, 3)
        spec = dlm.latent_bin_spec(grid)
        pmf = dlm.pmf_latent(p, grid)
        for c in range(2):
            for u in range(2):
                for v in range(3):
                    ref = brute_force_mixture_pmf(
                        p.pi[c, :, u, v], p.mu[c, :, u, v], p.sigma[c, :, u, v], spec)
                    np.testing.assert_allclose(pmf[c, u, v], ref, atol=1e-9)


class TestNllBits:
    def test_uniform_gives_8_bits_per_symbol(self):
        n = 64
        pmf = np.full((n, 256), 1 / 256)
        syms = np.random.default_rng(0).integers(0, 256, n)
        assert dlm.nll_bits(pmf, syms) == pytest.approx(8 * n)

    def test_one_hot_near_zero(self):
        pmf = np.zeros((4, 10))
        syms = np.array([1, 3, 5, 7])
        pmf[np.arange(4), syms] = 1.0
        assert dlm.nll_bits(pmf, syms) == pytest.approx(0.0, abs=1e-9)

    def test_matches_coded_length(self):
        rng = np.random.default_rng(11)
        n = 5000
        p = random_latent_params(rng, 1, 3, 1, n)
        pmf = dlm.pmf_latent(p, LevelGrid())[0, 0]  # [n, 25]
        syms = dlm._inverse_cdf_sample(pmf, rng)
        nll = dlm.nll_bits(pmf, syms)
        enc = RangeEncoder()
        for i in range(n):
            enc.encode_symbol(quantize_pmf(pmf[i]), int(syms[i]))
        bits = enc.finish().bit_length
        assert bits <= nll * 1.01 + 64

    def test_sharper_sigma_lowers_nll_at_true_value(self):
        grid = LevelGrid()
        j = 12
        syms = np.full((1, 4, 4), j)
        prev = None
        for sigma in (0.5, 0.1, 0.02):
            p = dlm.MixtureParamsLatent(
                np.ones((1, 1, 4, 4)),
                np.full((1, 1, 4, 4), grid.levels[j]),
                np.full((1, 1, 4, 4), sigma))
            nll = dlm.nll_bits(dlm.pmf_latent(p, grid), syms)
            if prev is not None:
                assert nll < prev
            prev = nll


class TestSampling:
    def test_deterministic_with_tiny_sigma(self):
        grid = LevelGrid()
        j = 5
        p = dlm.MixtureParamsLatent(
            np.ones((2, 1, 3, 3)),
            np.full((2, 1, 3, 3), grid.levels[j]),
            np.full((2, 1, 3, 3), 1e-3))
        out = dlm.sample_latent(p, grid, np.random.default_rng(0))
        assert np.all(out == j)

    def test_fixed_seed_reproducible(self):
        rng = np.random.default_rng(12)
        p = random_rgb_params(rng, 3, 5, 5)
        a = dlm.sample_rgb(p, np.random.default_rng(99))
        b = dlm.sample_rgb(p, np.random.default_rng(99))
        assert np.array_equal(a, b)

    def test_empirical_frequencies_match_pmf(self):
        grid = LevelGrid()
        rng = np.random.default_rng(13)
        p = random_latent_params(rng, 1, 3, 1, 1)
        pmf = dlm.pmf_latent(p, grid)[0, 0, 0]
        n = 100_000
        big = dlm.MixtureParamsLatent(
            np.repeat(p.pi, n, axis=2), np.repeat(p.mu, n, axis=2),
            np.repeat(p.sigma, n, axis=2))
        draws = dlm.sample_latent(big, grid, np.random.default_rng(5))[0, :, 0]
        freq = np.bincount(draws, minlength=25) / n
        sd = np.sqrt(pmf * (1 - pmf) / n)
        assert np.all(np.abs(freq - pmf) <= 3 * sd + 1e-4)
