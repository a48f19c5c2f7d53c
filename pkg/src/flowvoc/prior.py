"""Mel-conditioned Gaussian prior.

The sampler starts from N(0, diag(sigma^2)) rather than a standard normal:
per frame, sigma is the square root of the summed raw mel energy, normalized
by sqrt(n_mels * full_scale) so a maximally energetic frame maps to exactly
1.0, linearly interpolated from frame centers to sample positions, and
clamped to [1e-3, 1].  Nearly silent regions therefore start from noise three
orders of magnitude quieter than full scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .audio import MelConfig, MelSpectrogram

SIGMA_MIN = 1e-3
SIGMA_MAX = 1.0


@dataclass(frozen=True)
class PriorSpec:
    """Per-sample standard deviation of the zero-mean Gaussian prior."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"sigma must be 1-D, got shape {s.shape}")
        if np.any(s < SIGMA_MIN) or np.any(s > SIGMA_MAX):
            raise ValueError(
                f"sigma out of [{SIGMA_MIN}, {SIGMA_MAX}]: "
                f"range [{s.min():.4g}, {s.max():.4g}]"
            )
        object.__setattr__(self, "sigma", s)

    def __len__(self) -> int:
        return self.sigma.size


def frame_sigma(raw_mel: torch.Tensor, cfg: MelConfig) -> torch.Tensor:
    """Per-frame sigma: sqrt of the band sum over sqrt(n_mels * full_scale).

    Accepts [n_mels, frames] or [B, n_mels, frames]; reduces the band axis.
    """
    if torch.any(raw_mel < 0):
        raise ValueError("raw mel must be nonnegative")
    norm = float(np.sqrt(cfg.n_mels * cfg.full_scale))
    return torch.sqrt(raw_mel.sum(dim=-2)) / norm


def sigma_to_samples(sig_frames: torch.Tensor, hop: int, target_len: int) -> torch.Tensor:
    """Linearly interpolate per-frame sigma to per-sample sigma.

    Anchors frame tau at sample tau * hop + hop / 2 and continues the end
    values as constants, then clamps to [SIGMA_MIN, SIGMA_MAX].  Accepts
    [frames] or [B, frames].
    """
    squeeze = sig_frames.dim() == 1
    if squeeze:
        sig_frames = sig_frames.unsqueeze(0)
    n_frames = sig_frames.shape[-1]
    pos = (torch.arange(target_len, dtype=sig_frames.dtype, device=sig_frames.device) - hop / 2) / hop
    lo = pos.floor().clamp(0, n_frames - 1)
    hi = (lo + 1).clamp(max=n_frames - 1)
    w = (pos - lo).clamp(0.0, 1.0)
    lo, hi = lo.long(), hi.long()
    vals = (1.0 - w) * sig_frames[..., lo] + w * sig_frames[..., hi]
    vals = vals.clamp(SIGMA_MIN, SIGMA_MAX)
    return vals.squeeze(0) if squeeze else vals


def build_prior(mel: MelSpectrogram, target_len: int) -> PriorSpec:
    """Per-sample prior standard deviations for one mel spectrogram.

    ``target_len`` must equal frames * hop (the aligned waveform length).
    """
    cfg = mel.config
    if target_len != mel.frames * cfg.hop_length:
        raise ValueError(
            f"target_len {target_len} != frames*hop = {mel.frames * cfg.hop_length}"
        )
    raw = torch.from_numpy(np.asarray(mel.raw, dtype=np.float64))
    sig = sigma_to_samples(frame_sigma(raw, cfg), cfg.hop_length, target_len)
    return PriorSpec(sigma=sig.numpy())


def batch_sigma(raw_mel: torch.Tensor, cfg: MelConfig) -> torch.Tensor:
    """[B, n_mels, frames] raw mel -> [B, frames * hop] clamped sigma (torch)."""
    sig_frames = frame_sigma(raw_mel, cfg)
    return sigma_to_samples(sig_frames, cfg.hop_length, sig_frames.shape[-1] * cfg.hop_length)


def sample_prior(spec: PriorSpec, rng_seed: int | np.random.Generator) -> np.ndarray:
    """Draw one x0 ~ N(0, diag(sigma^2)); deterministic per seed."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.standard_normal(spec.sigma.size) * spec.sigma


def sample_prior_batch(
    sigma: torch.Tensor, rng: np.random.Generator, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Batched prior draw with numpy-seeded randomness (reproducible workers)."""
    noise = rng.standard_normal(tuple(sigma.shape))
    return torch.from_numpy(noise).to(dtype=dtype, device=sigma.device) * sigma.to(dtype)
