"""Mel-conditioned Gaussian prior contracts."""

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from flowvoc.audio import MelConfig, MelSpectrogram, extract_mel
from flowvoc.prior import (
    SIGMA_MAX,
    SIGMA_MIN,
    PriorSpec,
    batch_sigma,
    build_prior,
    frame_sigma,
    sample_prior,
    sample_prior_batch,
    sigma_to_samples,
)


def mel_from_raw(raw: np.ndarray, cfg: MelConfig) -> MelSpectrogram:
    raw = raw.astype(np.float32)
    log = np.log(np.maximum(raw, cfg.log_floor))
    return MelSpectrogram(raw=raw, log=log, config=cfg)


class TestFrameSigma:
    def test_max_energy_frame_is_exactly_one(self, mel_cfg):
        raw = torch.full((100, 3), 32768.0, dtype=torch.float64)
        sig = frame_sigma(raw, mel_cfg)
        assert torch.all(sig == 1.0)

    def test_zero_frame_is_zero_before_clamp(self, mel_cfg):
        sig = frame_sigma(torch.zeros(100, 3, dtype=torch.float64), mel_cfg)
        assert torch.all(sig == 0.0)

    def test_rejects_negative_cells(self, mel_cfg):
        raw = torch.zeros(100, 3, dtype=torch.float64)
        raw[5, 1] = -1.0
        with pytest.raises(ValueError, match="nonnegative"):
            frame_sigma(raw, mel_cfg)

    @given(st.floats(min_value=1.0, max_value=100.0))
    def test_scale_monotone(self, c):
        cfg = MelConfig()
        rng = np.random.default_rng(0)
        raw = torch.from_numpy(rng.uniform(0.0, 10.0, size=(100, 6)))
        lo = sigma_to_samples(frame_sigma(raw, cfg), cfg.hop_length, 6 * 256)
        hi = sigma_to_samples(frame_sigma(raw * c, cfg), cfg.hop_length, 6 * 256)
        assert torch.all(hi >= lo)


class TestBuildPrior:
    def test_silent_frames_clamp_to_floor(self, mel_cfg):
        mel = mel_from_raw(np.zeros((100, 4)), mel_cfg)
        spec = build_prior(mel, 4 * 256)
        assert np.all(spec.sigma == SIGMA_MIN)

    def test_silent_region_property(self, mel_cfg):
        # Any frame whose raw sum is at or below the clamp-equivalent energy
        # produces sigma exactly SIGMA_MIN.
        threshold = SIGMA_MIN**2 * mel_cfg.n_mels * mel_cfg.full_scale
        raw = np.zeros((100, 4))
        raw[0, :] = threshold  # entire sum in one band, exactly at threshold
        spec = build_prior(mel_from_raw(raw, mel_cfg), 4 * 256)
        assert np.all(spec.sigma == SIGMA_MIN)

    def test_full_scale_frames_give_sigma_one(self, mel_cfg):
        raw = np.full((100, 4), 32768.0)
        spec = build_prior(mel_from_raw(raw, mel_cfg), 4 * 256)
        assert np.all(spec.sigma == SIGMA_MAX)

    def test_interpolation_midpoint(self, mel_cfg):
        # Frames with sigma 0.2 and 0.4: the sample midway between the two
        # frame centers gets exactly 0.3.
        target = 0.2**2 * mel_cfg.n_mels * mel_cfg.full_scale
        raw = np.zeros((100, 2))
        raw[0, 0] = target
        raw[0, 1] = 4 * target  # doubles sigma
        spec = build_prior(mel_from_raw(raw, mel_cfg), 512)
        hop = mel_cfg.hop_length
        assert spec.sigma[hop // 2] == pytest.approx(0.2, abs=1e-9)
        assert spec.sigma[hop // 2 + hop] == pytest.approx(0.4, abs=1e-9)
        assert spec.sigma[hop] == pytest.approx(0.3, abs=1e-9)

    def test_interpolation_anchors_at_frame_centers(self, mel_cfg):
        rng = np.random.default_rng(4)
        raw = rng.uniform(0.0, 3000.0, size=(100, 8))
        mel = mel_from_raw(raw, mel_cfg)
        spec = build_prior(mel, 8 * 256)
        per_frame = frame_sigma(torch.from_numpy(raw.astype(np.float64)), mel_cfg)
        per_frame = per_frame.clamp(SIGMA_MIN, SIGMA_MAX).numpy()
        hop = mel_cfg.hop_length
        centers = np.arange(8) * hop + hop // 2
        np.testing.assert_allclose(spec.sigma[centers], per_frame, atol=1e-7)

    def test_constant_end_continuation(self, mel_cfg):
        raw = np.zeros((100, 4))
        raw[0, :] = np.array([1, 2, 3, 4]) * 1000.0
        spec = build_prior(mel_from_raw(raw, mel_cfg), 4 * 256)
        hop = mel_cfg.hop_length
        # Before the first frame center and after the last one, sigma holds.
        assert np.all(spec.sigma[: hop // 2] == spec.sigma[hop // 2])
        assert np.all(spec.sigma[-hop // 2 :] == spec.sigma[-hop // 2])

    def test_rejects_misaligned_target_len(self, mel_cfg):
        mel = mel_from_raw(np.zeros((100, 4)), mel_cfg)
        with pytest.raises(ValueError, match="frames\\*hop"):
            build_prior(mel, 1000)

    def test_real_clip_sigma_in_bounds(self, corpus_mels):
        mel = corpus_mels[0]
        spec = build_prior(mel, mel.num_samples)
        assert len(spec) == mel.num_samples
        assert spec.sigma.min() >= SIGMA_MIN
        assert spec.sigma.max() <= SIGMA_MAX


class TestPriorSpecInvariants:
    def test_rejects_out_of_range_sigma(self):
        with pytest.raises(ValueError, match="out of"):
            PriorSpec(sigma=np.full(100, 2.0))
        with pytest.raises(ValueError, match="out of"):
            PriorSpec(sigma=np.full(100, 1e-4))

    def test_rejects_non_vector(self):
        with pytest.raises(ValueError, match="1-D"):
            PriorSpec(sigma=np.full((2, 10), 0.5))


class TestSamplePrior:
    def test_monte_carlo_std_at_floor(self):
        spec = PriorSpec(sigma=np.full(1_000_000, SIGMA_MIN))
        noise = sample_prior(spec, rng_seed=123)
        std = noise.std()
        assert 0.95e-3 <= std <= 1.05e-3
        # CLT bound on the mean: 4 sigma / sqrt(n).
        assert abs(noise.mean()) <= 4 * SIGMA_MIN / 1000.0

    def test_seed_determinism(self):
        spec = PriorSpec(sigma=np.linspace(0.1, 0.9, 5000))
        a = sample_prior(spec, rng_seed=5)
        b = sample_prior(spec, rng_seed=5)
        assert np.array_equal(a, b)

    def test_per_sample_scaling(self):
        sigma = np.concatenate([np.full(200_000, 0.1), np.full(200_000, 0.8)])
        noise = sample_prior(PriorSpec(sigma=sigma), rng_seed=9)
        assert noise[:200_000].std() == pytest.approx(0.1, rel=0.02)
        assert noise[200_000:].std() == pytest.approx(0.8, rel=0.02)

    def test_batch_sampler_matches_sigma_shape(self, mel_cfg):
        rng = np.random.default_rng(0)
        raw = torch.from_numpy(rng.uniform(0, 3000, size=(3, 100, 4)))
        sigma = batch_sigma(raw, mel_cfg)
        assert sigma.shape == (3, 4 * 256)
        noise = sample_prior_batch(sigma, np.random.default_rng(1))
        assert noise.shape == (3, 4 * 256)
        assert noise.dtype == torch.float32

    def test_batch_sigma_matches_build_prior_per_row(self, corpus_mels, mel_cfg):
        mel = corpus_mels[1]
        raw = torch.from_numpy(mel.raw.astype(np.float64)).unsqueeze(0)
        batched = batch_sigma(raw, mel_cfg)[0].numpy()
        single = build_prior(mel, mel.num_samples).sigma
        np.testing.assert_allclose(batched, single, atol=1e-7)
