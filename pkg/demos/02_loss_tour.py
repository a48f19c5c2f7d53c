"""A tour of the training objective: flow-matching term plus spectral extras.

Builds a clean clip and a few degraded copies, then walks through each loss
component: the time-weighted waveform regression, the modified
multi-resolution STFT loss and its per-resolution breakdown, the classic
spectral-convergence variant kept for ablations and evaluation, the log-mel
L1, and finally the composed total with gradients flowing.
"""

import numpy as np
import torch

from flowvoc import (
    LegacyStftConfig,
    LossWeights,
    StftConfig,
    fm_loss,
    mel_l1,
    original_stft_loss,
    stft_loss,
    time_weight,
    total_loss,
)
from flowvoc.losses import stft_loss_report


def make_pair(seed: int, n: int = 16384, snr_db: float = 20.0):
    """A harmonic reference and a noisy copy at the given SNR."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) / 24000.0
    f0 = rng.uniform(80.0, 300.0)
    clean = sum(
        rng.uniform(0.2, 1.0) / k * np.sin(2 * np.pi * f0 * k * t + rng.uniform(0, 2 * np.pi))
        for k in range(1, 4)
    )
    clean = 0.8 * clean / np.max(np.abs(clean))
    noise = rng.standard_normal(n)
    noise *= np.sqrt(np.mean(clean**2) / np.mean(noise**2)) * 10 ** (-snr_db / 20)
    return torch.from_numpy(clean).float(), torch.from_numpy(clean + noise).float()


def main() -> None:
    x, xhat = make_pair(seed=0)

    # --- time weighting ----------------------------------------------------
    # The regression target (x - x_t)/(1 - t) blows up near t = 1, so the
    # waveform MSE is weighted by 1/(1-t), capped so late times stay finite.
    print("time weight 1/(1-t), cap 10:")
    for t in (0.0, 0.5, 0.9, 0.99):
        print(f"  t={t:<5} w={time_weight(t):g}")

    print("\nfm term (weighted waveform MSE) on the noisy pair:")
    for t in (0.0, 0.5, 0.9):
        print(f"  t={t:<5} fm={float(fm_loss(x, xhat, t)):.6f}")

    # --- modified multi-resolution STFT loss -------------------------------
    # Three resolutions; per grid, a phase-aware instantaneous-frequency /
    # group-delay / Laplacian comparison plus a log-magnitude L1.
    total_stft, breakdown = stft_loss_report(x, xhat)
    print(f"\nstft_loss = {float(total_stft):.6f}, by resolution:")
    for fft, entry in zip(StftConfig().fft_sizes, breakdown):
        parts = ", ".join(f"{key}={float(value):.4f}" for key, value in entry.items())
        print(f"  fft={fft:<5} {parts}")

    # --- classic form (ablation flag / evaluation metric) ------------------
    legacy = original_stft_loss(x, xhat, LegacyStftConfig())
    print(f"original_stft_loss (spectral convergence + log-mag) = {float(legacy):.6f}")

    # --- mel L1 -------------------------------------------------------------
    print(f"mel_l1 = {float(mel_l1(x, xhat)):.6f}")

    # --- composition, with gradients ---------------------------------------
    pred = xhat.clone().requires_grad_(True)
    report = total_loss(x, pred, t=0.5, weights=LossWeights())
    report.total.backward()
    rep = report.detached()
    print("\ntotal_loss at t=0.5 with default weights (0.02 / 0.02):")
    print(f"  fm={rep.fm_term:.6f}  stft={rep.stft_term:.6f}  "
          f"mel={rep.mel_term:.6f}  total={rep.total:.6f}")
    print(f"  grad: shape {tuple(pred.grad.shape)}, max |g| = {pred.grad.abs().max():.3e}")
    print("\nlog line:", rep.to_log_line(step=123, lr=7.5e-5))

    # Identity: every component vanishes when the prediction is exact.
    zero = total_loss(x, x, t=0.5)
    print(f"\nself-comparison: fm={float(zero.fm_term):g} stft={float(zero.stft_term):g} "
          f"mel={float(zero.mel_term):g}")
    assert float(stft_loss(x, x)) == 0.0


if __name__ == "__main__":
    main()
