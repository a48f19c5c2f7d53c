"""Training losses: time-weighted waveform regression, the modified
multi-resolution STFT loss, and the mel L1 term.

The spectral loss replaces spectral convergence with a wrapped phase-angle
term and adds mean-square penalties on temporal-gradient, frequency-gradient,
and Laplacian filterings of the floored magnitude spectrograms.  The classic
spectral-convergence + log-magnitude form is kept as ``original_stft_loss``
for ablations and as the evaluation metric.

All functions are pure, dtype-preserving, and differentiable through torch
autograd (the phase mask and magnitude floor introduce the only, deliberate,
discontinuities).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .audio import MelConfig, _hann, waveform_to_log_mel


@dataclass(frozen=True)
class StftConfig:
    """Resolutions of the modified multi-resolution STFT loss.

    ``mag_floor`` applies to squared magnitudes: cells below it are masked
    out of the phase term, and the same constant is added under the square
    root that produces the magnitude grids.
    """

    fft_sizes: tuple[int, ...] = (1024, 2048, 512)
    hop_sizes: tuple[int, ...] = (128, 256, 64)
    win_lengths: tuple[int, ...] = (512, 1024, 256)
    mag_floor: float = 1e-6

    def __post_init__(self):
        if not (len(self.fft_sizes) == len(self.hop_sizes) == len(self.win_lengths)):
            raise ValueError("resolution lists must have equal length")
        for n_fft, win in zip(self.fft_sizes, self.win_lengths):
            if win > n_fft:
                raise ValueError(f"win_length {win} exceeds n_fft {n_fft}")

    @property
    def n_resolutions(self) -> int:
        return len(self.fft_sizes)


@dataclass(frozen=True)
class LegacyStftConfig(StftConfig):
    """Parallel-WaveGAN resolution set for the spectral-convergence loss.

    ``mag_floor`` here floors the linear magnitude inside the log term only;
    the convergence ratio uses unfloored magnitudes so an all-zero estimate
    scores exactly 1.
    """

    fft_sizes: tuple[int, ...] = (1024, 2048, 512)
    hop_sizes: tuple[int, ...] = (120, 240, 50)
    win_lengths: tuple[int, ...] = (600, 1200, 240)
    mag_floor: float = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Total-loss composition: fm + lambda0 * stft + lambda1 * mel."""

    lambda0: float = 0.02
    lambda1: float = 0.02
    time_weight_cap: float = 10.0
    legacy_stft: bool = False

    def __post_init__(self):
        if self.lambda0 < 0 or self.lambda1 < 0 or self.time_weight_cap <= 0:
            raise ValueError("weights must be nonnegative, cap positive")


def _scalar(value) -> float:
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


@dataclass
class LossReport:
    """Per-term loss breakdown.

    Fields hold 0-dim tensors while a graph is alive (so ``total`` can be
    backpropagated) and plain floats after :meth:`detached`.  ``resolutions``
    carries the per-resolution spectral sub-terms.
    """

    fm_term: torch.Tensor | float
    stft_term: torch.Tensor | float
    mel_term: torch.Tensor | float
    total: torch.Tensor | float
    resolutions: list[dict] = field(default_factory=list)
    diverged: bool = False

    def detached(self) -> "LossReport":
        return LossReport(
            fm_term=_scalar(self.fm_term),
            stft_term=_scalar(self.stft_term),
            mel_term=_scalar(self.mel_term),
            total=_scalar(self.total),
            resolutions=[
                {k: _scalar(v) for k, v in r.items()} for r in self.resolutions
            ],
            diverged=self.diverged,
        )

    def to_log_line(self, step: int | None = None, lr: float | None = None) -> str:
        parts = []
        if step is not None:
            parts.append(f"step={step}")
        if lr is not None:
            parts.append(f"lr={lr:.6g}")
        parts += [
            f"fm={_scalar(self.fm_term):.6g}",
            f"stft={_scalar(self.stft_term):.6g}",
            f"mel={_scalar(self.mel_term):.6g}",
            f"total={_scalar(self.total):.6g}",
        ]
        if self.diverged:
            parts.append("diverged=1")
        return " ".join(parts)


# ---------------------------------------------------------------------------
# Scalar pieces
# ---------------------------------------------------------------------------


def time_weight(t, cap: float = 10.0):
    """1 / (1 - t) clamped at ``cap``, i.e. 1 / max(1/cap, 1 - t).

    Accepts scalars or tensors on [0, 1); values at or beyond 1 are a domain
    error (the reparameterized regression target diverges there).
    """
    t_t = torch.as_tensor(t)
    if torch.any(t_t < 0) or torch.any(t_t >= 1):
        raise ValueError(f"t must lie in [0, 1), got {t}")
    w = 1.0 / torch.clamp(1.0 - t_t, min=1.0 / cap)
    return w if isinstance(t, torch.Tensor) else float(w)


def _as_batch(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 1:
        return x.unsqueeze(0)
    if x.dim() == 2:
        return x
    raise ValueError(f"expected [L] or [B, L] waveform, got shape {tuple(x.shape)}")


def fm_loss(x1: torch.Tensor, v1: torch.Tensor, t, cap: float = 10.0) -> torch.Tensor:
    """Time-weighted mean-square waveform error.

    The mean (not sum) over samples makes the value independent of segment
    length, so the auxiliary-loss weights keep their meaning across segment
    sizes.  ``t`` may be a scalar or a per-batch-element vector.
    """
    if x1.shape != v1.shape:
        raise ValueError(f"shape mismatch: {tuple(x1.shape)} vs {tuple(v1.shape)}")
    x1b, v1b = _as_batch(x1), _as_batch(v1)
    w = time_weight(torch.as_tensor(t, dtype=x1b.dtype, device=x1b.device), cap)
    per_elem = ((x1b - v1b) ** 2).mean(dim=-1)
    return (w * per_elem).mean()


# ---------------------------------------------------------------------------
# STFT grids and spectrogram operators
# ---------------------------------------------------------------------------


def stft_grids(x: torch.Tensor, cfg: StftConfig, resolution: int) -> torch.Tensor:
    """Complex one-sided STFT [B, n_fft/2+1, frames] at one resolution.

    Center padding uses zeros (not reflection) so the shortest valid inputs
    (one analysis window) remain inside the padding contract at every
    resolution.
    """
    xb = _as_batch(x)
    n_fft = cfg.fft_sizes[resolution]
    win = cfg.win_lengths[resolution]
    if xb.shape[-1] < win:
        raise ValueError(f"waveform shorter than one window ({win})")
    return torch.stft(
        xb,
        n_fft=n_fft,
        hop_length=cfg.hop_sizes[resolution],
        win_length=win,
        window=_hann(win, xb.dtype, xb.device),
        center=True,
        pad_mode="constant",
        return_complex=True,
    )


def wrap_phase(delta: torch.Tensor) -> torch.Tensor:
    """Wrap a phase difference into (-pi, pi] via atan2(sin, cos)."""
    return torch.atan2(torch.sin(delta), torch.cos(delta))


def filter_time(mag: torch.Tensor) -> torch.Tensor:
    """Temporal-gradient filtering; zero pad left 1 in time, 1 per side in frequency."""
    return _correlate2d(mag, _KERNEL_TIME, pad=(1, 0, 1, 1))


def filter_freq(mag: torch.Tensor) -> torch.Tensor:
    """Frequency-gradient filtering; zero pad top 1 in frequency, 1 per side in time."""
    return _correlate2d(mag, _KERNEL_FREQ, pad=(1, 1, 1, 0))


def filter_laplacian(mag: torch.Tensor) -> torch.Tensor:
    """8-center Laplacian filtering; zero pad 1 all around."""
    return _correlate2d(mag, _KERNEL_LAP, pad=(1, 1, 1, 1))


_KERNEL_TIME = torch.tensor([[-1.0, 1.0], [-2.0, 2.0], [-1.0, 1.0]]) / 4.0
_KERNEL_FREQ = torch.tensor([[-1.0, -2.0, -1.0], [1.0, 2.0, 1.0]]) / 4.0
_KERNEL_LAP = (
    torch.tensor([[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]]) / 8.0
)


def _correlate2d(grid: torch.Tensor, kernel: torch.Tensor, pad: tuple) -> torch.Tensor:
    squeeze = grid.dim() == 2
    if squeeze:
        grid = grid.unsqueeze(0)
    kh, kw = kernel.shape
    if grid.shape[-2] + pad[2] + pad[3] < kh or grid.shape[-1] + pad[0] + pad[1] < kw:
        raise ValueError(f"grid {tuple(grid.shape[-2:])} smaller than kernel {kernel.shape}")
    x = F.pad(grid, pad, mode="constant")
    w = kernel.to(dtype=grid.dtype, device=grid.device).reshape(1, 1, kh, kw)
    out = torch.conv2d(x.unsqueeze(1), weight=w).squeeze(1)
    return out.squeeze(0) if squeeze else out


def spectro_operators(mag: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(time-gradient, frequency-gradient, Laplacian) of a magnitude grid.

    Output shapes equal the input shape; the grid axes are [.., freq, time].
    """
    return filter_time(mag), filter_freq(mag), filter_laplacian(mag)


# ---------------------------------------------------------------------------
# Modified multi-resolution STFT loss
# ---------------------------------------------------------------------------


def _phase_mag_terms(spec_x: torch.Tensor, spec_y: torch.Tensor, mag_floor: float):
    """Wrapped-phase mean over the joint mask, log-magnitude mean over all cells.

    Returns (phase_term, mag_term, mag_x, mag_y, mask) with the floored
    magnitude grids reused by the operator penalties.
    """
    sq_x = spec_x.real**2 + spec_x.imag**2
    sq_y = spec_y.real**2 + spec_y.imag**2
    mask = (sq_x > mag_floor) & (sq_y > mag_floor)
    mag_x = torch.sqrt(sq_x + mag_floor)
    mag_y = torch.sqrt(sq_y + mag_floor)
    if mask.any():
        pha_x = torch.atan2(spec_x.imag[mask], spec_x.real[mask])
        pha_y = torch.atan2(spec_y.imag[mask], spec_y.real[mask])
        phase = wrap_phase(pha_x - pha_y).abs().mean()
    else:
        phase = torch.zeros((), dtype=mag_x.dtype, device=mag_x.device)
    mag = (mag_x.log() - mag_y.log()).abs().mean()
    return phase, mag, mag_x, mag_y, mask


def stft_phase_mag_loss(
    x: torch.Tensor, xhat: torch.Tensor, cfg: StftConfig | None = None
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """(phase_term, mag_term) per resolution.

    The phase term averages wrapped phase differences over cells where both
    squared magnitudes exceed ``mag_floor``; the magnitude term averages
    absolute log-magnitude differences over every cell, with the floor added
    under the square root.
    """
    cfg = cfg or StftConfig()
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    out = []
    for i in range(cfg.n_resolutions):
        phase, mag, _, _, _ = _phase_mag_terms(
            stft_grids(x, cfg, i), stft_grids(xhat, cfg, i), cfg.mag_floor
        )
        out.append((phase, mag))
    return out


#: Mean-square scale factors for (freq-gradient, time-gradient, Laplacian).
OPERATOR_WEIGHTS = (4.0, 4.0, 2.0)


def stft_loss_report(
    x: torch.Tensor, xhat: torch.Tensor, cfg: StftConfig | None = None
) -> tuple[torch.Tensor, list[dict]]:
    """Modified multi-resolution STFT loss with per-resolution breakdown."""
    cfg = cfg or StftConfig()
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    total = None
    breakdown = []
    w_df, w_dt, w_lap = OPERATOR_WEIGHTS
    for i in range(cfg.n_resolutions):
        phase, mag, mag_x, mag_y, _ = _phase_mag_terms(
            stft_grids(x, cfg, i), stft_grids(xhat, cfg, i), cfg.mag_floor
        )
        dt_x, df_x, lap_x = spectro_operators(mag_x)
        dt_y, df_y, lap_y = spectro_operators(mag_y)
        d_f = ((df_x - df_y) ** 2).mean()
        d_t = ((dt_x - dt_y) ** 2).mean()
        lap = ((lap_x - lap_y) ** 2).mean()
        res_total = phase + mag + w_df * d_f + w_dt * d_t + w_lap * lap
        total = res_total if total is None else total + res_total
        breakdown.append(
            {"phase": phase, "log_mag": mag, "grad_f": d_f, "grad_t": d_t, "laplacian": lap}
        )
    return total / cfg.n_resolutions, breakdown


def stft_loss(x: torch.Tensor, xhat: torch.Tensor, cfg: StftConfig | None = None) -> torch.Tensor:
    total, _ = stft_loss_report(x, xhat, cfg)
    return total


# ---------------------------------------------------------------------------
# Classic spectral-convergence form (ablation flag + evaluation metric)
# ---------------------------------------------------------------------------


def original_stft_loss_report(
    x: torch.Tensor, xhat: torch.Tensor, cfg: LegacyStftConfig | None = None
) -> tuple[torch.Tensor, list[dict]]:
    """Spectral convergence + log magnitude, averaged over resolutions.

    Convergence uses unfloored magnitudes (an all-zero estimate scores
    exactly 1); the log term floors the linear magnitude at ``mag_floor``.
    """
    cfg = cfg or LegacyStftConfig()
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    total = None
    breakdown = []
    for i in range(cfg.n_resolutions):
        mag_x = stft_grids(x, cfg, i).abs()
        mag_y = stft_grids(xhat, cfg, i).abs()
        sc = torch.linalg.vector_norm(mag_x - mag_y) / torch.linalg.vector_norm(mag_x)
        log_x = torch.log(torch.clamp(mag_x, min=cfg.mag_floor))
        log_y = torch.log(torch.clamp(mag_y, min=cfg.mag_floor))
        log_mag = (log_x - log_y).abs().mean()
        total = sc + log_mag if total is None else total + sc + log_mag
        breakdown.append({"spectral_convergence": sc, "log_mag": log_mag})
    return total / cfg.n_resolutions, breakdown


def original_stft_loss(
    x: torch.Tensor, xhat: torch.Tensor, cfg: LegacyStftConfig | None = None
) -> torch.Tensor:
    total, _ = original_stft_loss_report(x, xhat, cfg)
    return total


# ---------------------------------------------------------------------------
# Mel L1 and the total
# ---------------------------------------------------------------------------


def mel_l1(x: torch.Tensor, xhat: torch.Tensor, cfg: MelConfig | None = None) -> torch.Tensor:
    """Mean absolute log-mel difference (normalized by the element count)."""
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    cfg = cfg or MelConfig()
    return (waveform_to_log_mel(x, cfg) - waveform_to_log_mel(xhat, cfg)).abs().mean()


def total_loss(
    x1: torch.Tensor,
    v1: torch.Tensor,
    t,
    weights: LossWeights | None = None,
    stft_cfg: StftConfig | None = None,
    mel_cfg: MelConfig | None = None,
) -> LossReport:
    """fm + lambda0 * stft + lambda1 * mel with full term breakdown.

    The report fields are live tensors; call ``report.total.backward()`` to
    train and ``report.detached()`` to log.
    """
    weights = weights or LossWeights()
    stft_cfg = stft_cfg or StftConfig()
    mel_cfg = mel_cfg or MelConfig()
    fm = fm_loss(x1, v1, t, cap=weights.time_weight_cap)
    if weights.legacy_stft:
        stft, breakdown = original_stft_loss_report(x1, v1, LegacyStftConfig())
    else:
        stft, breakdown = stft_loss_report(x1, v1, stft_cfg)
    mel = mel_l1(x1, v1, mel_cfg)
    total = fm + weights.lambda0 * stft + weights.lambda1 * mel
    return LossReport(fm_term=fm, stft_term=stft, mel_term=mel, total=total, resolutions=breakdown)
