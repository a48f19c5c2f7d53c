"""Training-loss contracts, checked against independent per-cell oracles."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from flowvoc.losses import (
    OPERATOR_WEIGHTS,
    LegacyStftConfig,
    LossReport,
    LossWeights,
    StftConfig,
    _phase_mag_terms,
    filter_freq,
    filter_laplacian,
    filter_time,
    fm_loss,
    mel_l1,
    original_stft_loss,
    original_stft_loss_report,
    spectro_operators,
    stft_grids,
    stft_loss,
    stft_loss_report,
    stft_phase_mag_loss,
    time_weight,
    total_loss,
    wrap_phase,
)
from flowvoc.reference import (
    naive_filter_freq,
    naive_filter_laplacian,
    naive_filter_time,
    naive_original_stft_loss,
    naive_stft,
    naive_stft_loss,
)


def noise_pair(seed: int, n: int, amp: float = 0.9, dtype=torch.float32):
    rng = np.random.default_rng(seed)
    x = torch.from_numpy(rng.uniform(-amp, amp, n)).to(dtype)
    y = torch.from_numpy(rng.uniform(-amp, amp, n)).to(dtype)
    return x, y


class TestTimeWeight:
    def test_reference_points(self):
        assert time_weight(0.0) == pytest.approx(1.0)
        assert time_weight(0.5) == pytest.approx(2.0)
        assert time_weight(0.95) == pytest.approx(10.0)
        assert time_weight(0.9) == pytest.approx(10.0)

    def test_domain_error_at_and_beyond_one(self):
        for t in (1.0, 1.5, -0.1):
            with pytest.raises(ValueError, match="lie in"):
                time_weight(t)

    def test_tensor_input_elementwise(self):
        t = torch.tensor([0.0, 0.5, 0.99])
        w = time_weight(t)
        assert torch.allclose(w, torch.tensor([1.0, 2.0, 10.0]))

    @given(st.floats(min_value=0.0, max_value=0.999))
    def test_equals_one_over_clamped_gap(self, t):
        assert time_weight(t) == pytest.approx(1.0 / max(0.1, 1.0 - t))


class TestFmLoss:
    def test_exact_prediction_is_zero(self):
        x, _ = noise_pair(0, 2048)
        assert float(fm_loss(x, x, 0.7)) == 0.0

    def test_constant_residual(self):
        x = torch.zeros(1024)
        v = torch.full((1024,), -0.1)
        assert float(fm_loss(x, v, 0.5)) == pytest.approx(2 * 0.01, rel=1e-6)

    def test_tiling_invariance(self):
        x, v = noise_pair(1, 1024)
        single = float(fm_loss(x, v, 0.3))
        tiled = float(fm_loss(x.repeat(3), v.repeat(3), 0.3))
        assert tiled == pytest.approx(single, rel=1e-6)

    def test_per_element_time_vector(self):
        x = torch.zeros(2, 1024)
        v = 0.1 * torch.ones(2, 1024)
        t = torch.tensor([0.0, 0.95])
        expected = 0.5 * (1.0 * 0.01 + 10.0 * 0.01)
        assert float(fm_loss(x, v, t)) == pytest.approx(expected, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            fm_loss(torch.zeros(1024), torch.zeros(1025), 0.5)


class TestStftGrids:
    def test_zero_input_zero_grid(self):
        cfg = StftConfig()
        grid = stft_grids(torch.zeros(2048), cfg, 0)
        assert torch.all(grid == 0)

    def test_one_sided_shape(self):
        cfg = StftConfig()
        for i, n_fft in enumerate(cfg.fft_sizes):
            grid = stft_grids(torch.zeros(4096), cfg, i)
            assert grid.shape[1] == n_fft // 2 + 1

    def test_rejects_sub_window_input(self):
        with pytest.raises(ValueError, match="window"):
            stft_grids(torch.zeros(500), StftConfig(), 1)

    def test_parseval_on_white_noise(self):
        # Per frame, E[sum_k |X_k|^2 over the full band] = n_fft * var * sum w^2.
        # Reassemble the full band from the one-sided grid and compare the
        # interior-frame average against the known noise power.
        cfg = StftConfig()
        rng = np.random.default_rng(7)
        var = 0.09
        x = torch.from_numpy(rng.normal(0.0, math.sqrt(var), 24000))
        grid = stft_grids(x, cfg, 0)[0]
        n_fft, win = cfg.fft_sizes[0], cfg.win_lengths[0]
        w = torch.hann_window(win, dtype=torch.float64)
        sq = grid.abs() ** 2
        full_band = 2 * sq.sum(dim=0) - sq[0] - sq[-1]
        interior = full_band[8:-8] / (n_fft * float((w**2).sum()))
        assert float(interior.mean()) == pytest.approx(var, rel=0.10)

    def test_matches_naive_dft(self):
        cfg = StftConfig()
        x = noise_pair(3, 1200, dtype=torch.float64)[0]
        for i in range(cfg.n_resolutions):
            fast = stft_grids(x, cfg, i)[0].numpy()
            slow = naive_stft(
                x.numpy(), cfg.fft_sizes[i], cfg.hop_sizes[i], cfg.win_lengths[i]
            )
            assert fast.shape == slow.shape
            np.testing.assert_allclose(fast, slow, atol=1e-8)


class TestWrapPhase:
    def test_three_half_pi_wraps_to_minus_half_pi(self):
        wrapped = wrap_phase(torch.tensor(3 * math.pi / 2))
        assert float(wrapped) == pytest.approx(-math.pi / 2, abs=1e-6)

    @given(st.floats(min_value=-50.0, max_value=50.0))
    def test_range_and_congruence(self, delta):
        w = float(wrap_phase(torch.tensor(delta, dtype=torch.float64)))
        assert -math.pi <= w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(delta), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(delta), abs=1e-9)


class TestSpectroOperators:
    def test_constant_grid_interior_and_corner(self):
        c = 0.7
        grid = torch.full((12, 9), c, dtype=torch.float64)
        d_t, d_f, lap = spectro_operators(grid)
        assert d_t.shape == d_f.shape == lap.shape == grid.shape
        assert torch.all(d_t[1:-1, 1:].abs() < 1e-12)
        assert torch.all(d_f[1:, 1:-1].abs() < 1e-12)
        assert torch.all(lap[1:-1, 1:-1].abs() < 1e-12)
        # Zero padding leaves 5 of the Laplacian's 8 neighbors outside at a
        # corner: c * (8 - 3) / 8.
        assert float(lap[0, 0]) == pytest.approx(5 * c / 8)

    def test_time_ramp(self):
        grid = torch.arange(9, dtype=torch.float64).repeat(12, 1)
        d_t, d_f, _ = spectro_operators(grid)
        assert torch.all((d_t[1:-1, 1:] - 1.0).abs() < 1e-12)
        assert torch.all(d_f[1:, 1:-1].abs() < 1e-12)

    def test_freq_ramp(self):
        grid = torch.arange(12, dtype=torch.float64).unsqueeze(1).repeat(1, 9)
        d_t, d_f, _ = spectro_operators(grid)
        assert torch.all((d_f[1:, 1:-1] - 1.0).abs() < 1e-12)
        assert torch.all(d_t[1:-1, 1:].abs() < 1e-12)

    def test_matches_naive_loops(self):
        rng = np.random.default_rng(11)
        grid_np = rng.uniform(0.0, 2.0, size=(30, 17))
        grid = torch.from_numpy(grid_np)
        np.testing.assert_allclose(filter_time(grid).numpy(), naive_filter_time(grid_np), atol=1e-12)
        np.testing.assert_allclose(filter_freq(grid).numpy(), naive_filter_freq(grid_np), atol=1e-12)
        np.testing.assert_allclose(
            filter_laplacian(grid).numpy(), naive_filter_laplacian(grid_np), atol=1e-12
        )

    def test_rejects_grid_smaller_than_kernel(self):
        # The fixed paddings make every nonempty grid viable; an empty axis
        # leaves the padded extent below the kernel size and must fail.
        with pytest.raises(ValueError, match="kernel"):
            filter_laplacian(torch.zeros(5, 0))
        with pytest.raises(ValueError, match="kernel"):
            filter_time(torch.zeros(0, 5))


class TestPhaseMagLoss:
    def test_identity_is_zero(self):
        x, _ = noise_pair(4, 2048)
        for phase, mag in stft_phase_mag_loss(x, x):
            assert float(phase) == 0.0
            assert float(mag) == 0.0

    def test_all_zero_pair(self):
        z = torch.zeros(2048)
        for phase, mag in stft_phase_mag_loss(z, z):
            assert float(phase) == 0.0
            assert float(mag) == 0.0

    def test_phase_term_bounded_by_pi(self):
        for seed in range(3):
            x, y = noise_pair(seed, 1500)
            for phase, _ in stft_phase_mag_loss(x, y):
                assert 0.0 <= float(phase) <= math.pi

    def test_mask_monotone_under_scaling(self):
        cfg = StftConfig()
        x, y = noise_pair(6, 1500, amp=0.002)
        for c in (1.5, 4.0):
            for i in range(cfg.n_resolutions):
                *_, mask1 = _phase_mag_terms(
                    stft_grids(x, cfg, i), stft_grids(y, cfg, i), cfg.mag_floor
                )
                *_, mask2 = _phase_mag_terms(
                    stft_grids(c * x, cfg, i), stft_grids(c * y, cfg, i), cfg.mag_floor
                )
                assert int(mask1.sum()) > 0
                assert torch.all(mask2 | ~mask1)


class TestStftLoss:
    def test_identity_is_zero(self):
        x, _ = noise_pair(8, 2048)
        assert float(stft_loss(x, x)) == 0.0

    def test_symmetry(self):
        x, y = noise_pair(9, 2048)
        forward = float(stft_loss(x, y))
        backward = float(stft_loss(y, x))
        assert forward == pytest.approx(backward, rel=1e-6)

    def test_matches_naive_oracle(self):
        for seed, n in ((21, 1024), (22, 2000)):
            x, y = noise_pair(seed, n, dtype=torch.float64)
            fast = float(stft_loss(x, y))
            slow = naive_stft_loss(x.numpy(), y.numpy())
            assert abs(fast - slow) / abs(slow) < 1e-5

    def test_report_terms_nonnegative_and_assemble(self):
        x, y = noise_pair(10, 2048)
        total, breakdown = stft_loss_report(x, y)
        w_df, w_dt, w_lap = OPERATOR_WEIGHTS
        recomputed = 0.0
        for res in breakdown:
            for value in res.values():
                assert float(value) >= 0.0
            recomputed += (
                float(res["phase"])
                + float(res["log_mag"])
                + w_df * float(res["grad_f"])
                + w_dt * float(res["grad_t"])
                + w_lap * float(res["laplacian"])
            )
        assert float(total) == pytest.approx(recomputed / 3.0, rel=1e-5)


class TestOriginalStftLoss:
    def test_identity_is_zero(self):
        x, _ = noise_pair(12, 2048)
        assert float(original_stft_loss(x, x)) == 0.0

    def test_zero_estimate_spectral_convergence_is_one(self):
        x, _ = noise_pair(13, 2048)
        _, breakdown = original_stft_loss_report(x, torch.zeros_like(x))
        for res in breakdown:
            assert float(res["spectral_convergence"]) == pytest.approx(1.0, abs=1e-6)

    def test_matches_naive_oracle(self):
        x, y = noise_pair(14, 1500, dtype=torch.float64)
        fast = float(original_stft_loss(x, y))
        slow = naive_original_stft_loss(x.numpy(), y.numpy())
        assert abs(fast - slow) / abs(slow) < 1e-5

    def test_legacy_resolution_set(self):
        cfg = LegacyStftConfig()
        assert cfg.hop_sizes == (120, 240, 50)
        assert cfg.win_lengths == (600, 1200, 240)


class TestMelL1:
    def test_identity_is_zero(self):
        x, _ = noise_pair(15, 2048)
        assert float(mel_l1(x, x)) == 0.0

    def test_constant_log_offset(self):
        # Scaling a loud broadband signal by e^0.5 shifts every log-mel cell
        # by exactly 0.5 as long as no cell sits at the floor.
        rng = np.random.default_rng(16)
        x = torch.from_numpy(rng.uniform(-0.3, 0.3, 4096).astype(np.float32))
        from flowvoc.audio import waveform_to_raw_mel

        assert float(waveform_to_raw_mel(x).min()) > 2e-5
        assert float(mel_l1(x, x * math.exp(0.5))) == pytest.approx(0.5, abs=1e-4)

    def test_batch_tiling_invariance(self):
        x, y = noise_pair(17, 2048)
        single = float(mel_l1(x, y))
        tiled = float(mel_l1(x.unsqueeze(0).repeat(3, 1), y.unsqueeze(0).repeat(3, 1)))
        assert tiled == pytest.approx(single, rel=1e-5)


class TestTotalLoss:
    def test_exact_prediction_zero(self):
        x, _ = noise_pair(18, 2048)
        report = total_loss(x, x, 0.4)
        assert float(report.total) == 0.0

    def test_reduces_to_fm_when_aux_weights_zero(self):
        x, y = noise_pair(19, 2048)
        weights = LossWeights(lambda0=0.0, lambda1=0.0)
        report = total_loss(x, y, 0.4, weights)
        assert float(report.total) == pytest.approx(float(fm_loss(x, y, 0.4)), rel=1e-7)

    def test_bookkeeping_identity(self):
        x, y = noise_pair(20, 2048)
        report = total_loss(x, y, 0.6).detached()
        recomputed = report.fm_term + 0.02 * report.stft_term + 0.02 * report.mel_term
        assert report.total == pytest.approx(recomputed, rel=1e-6)

    def test_legacy_flag_switches_spectral_term(self):
        x, y = noise_pair(21, 2048)
        report = total_loss(x, y, 0.3, LossWeights(legacy_stft=True))
        assert float(report.stft_term) == pytest.approx(
            float(original_stft_loss(x, y)), rel=1e-6
        )
        assert "spectral_convergence" in report.resolutions[0]

    @given(st.floats(min_value=0.0, max_value=0.99))
    @settings(max_examples=10)
    def test_zero_law_across_time(self, t):
        x, _ = noise_pair(22, 1024)
        assert float(total_loss(x, x, t).total) == 0.0

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=10)
    def test_nonnegative_terms(self, seed):
        x, y = noise_pair(seed, 1024)
        report = total_loss(x, y, 0.5).detached()
        assert report.fm_term >= 0
        assert report.stft_term >= 0
        assert report.mel_term >= 0
        assert report.total >= 0

    def test_to_log_line_formats_live_tensors(self):
        x, y = noise_pair(23, 1024)
        report = total_loss(x, y, 0.5)
        line = report.to_log_line(step=7, lr=1e-4)
        assert line.startswith("step=7 lr=0.0001 fm=")
        report.total.backward  # graph still alive; no detach side effects


class TestGradientCheck:
    def test_autodiff_matches_central_differences(self):
        # Spot check on 6 coordinates; the release checklist covers 16.  All
        # perturbed points must stay off the phase-mask threshold, otherwise
        # the deliberate discontinuity voids the comparison.
        torch.manual_seed(0)
        n = 1500
        x, base = noise_pair(30, n, dtype=torch.float64)
        v = base.clone().requires_grad_(True)
        t = 0.37
        report = total_loss(x, v, t)
        report.total.backward()
        grad = v.grad.clone()

        eps = 1e-4
        cfg = StftConfig()
        rng = np.random.default_rng(31)
        coords = rng.choice(n, size=6, replace=False)

        def masks(wave):
            out = []
            for i in range(cfg.n_resolutions):
                g = stft_grids(wave, cfg, i)
                out.append((g.real**2 + g.imag**2) > cfg.mag_floor)
            return out

        for idx in coords:
            plus, minus = base.clone(), base.clone()
            plus[idx] += eps
            minus[idx] -= eps
            for m_a, m_b in zip(masks(plus), masks(minus)):
                assert torch.equal(m_a, m_b), "perturbation crossed the mask boundary"
            f_plus = float(total_loss(x, plus, t).total)
            f_minus = float(total_loss(x, minus, t).total)
            numeric = (f_plus - f_minus) / (2 * eps)
            analytic = float(grad[idx])
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-3
