"""Audio ingestion, segmentation, and mel-spectrogram analysis.

The analysis front end is shared by training, synthesis, and evaluation:
100-band mel spectrograms at 24 kHz with a 1024-point FFT, 1024-sample Hann
window, and 256-sample hop.  The "raw" mel view is scaled so that full-scale
tones land in [0, 32768] (16-bit full scale); the network and the mel loss
consume the floored natural-log view.

Framing contract: the waveform is right-padded with zeros to a hop multiple,
then reflect-padded by (n_fft - hop) / 2 on each side, so a clip of L samples
yields exactly ceil(L / hop) frames and frame tau is centered on sample
tau * hop + hop / 2.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from scipy.io import wavfile
from scipy.signal import resample_poly


class AudioError(ValueError):
    """Raised for unreadable, malformed, or out-of-contract audio inputs."""


#: Shortest clip the pipeline accepts (one hop of the standard analysis).
MIN_CLIP_SAMPLES = 256


@dataclass(frozen=True)
class MelConfig:
    """Mel analysis parameters.

    ``full_scale`` is the 16-bit full-scale factor applied before the
    magnitude STFT; together with unit-peak triangular filters and
    window-sum normalization it places raw mel values in [0, 32768].
    """

    sample_rate: int = 24000
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = 100
    f_min: float = 0.0
    f_max: float = 12000.0
    log_floor: float = 1e-5
    full_scale: float = 32768.0

    def __post_init__(self):
        if self.f_max > self.sample_rate / 2:
            raise ValueError(
                f"f_max={self.f_max} exceeds Nyquist {self.sample_rate / 2}"
            )
        if self.win_length > self.n_fft:
            raise ValueError("win_length must not exceed n_fft")
        if self.hop_length <= 0 or self.n_fft <= 0:
            raise ValueError("hop_length and n_fft must be positive")

    @property
    def edge_pad(self) -> int:
        # Reflect padding applied on each side before the center=False STFT.
        return (self.n_fft - self.hop_length) // 2


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int = 24000

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float32)
        if x.ndim != 1:
            raise AudioError(f"expected mono 1-D samples, got shape {x.shape}")
        if x.size < MIN_CLIP_SAMPLES:
            raise AudioError(
                f"clip of {x.size} samples is shorter than one hop "
                f"({MIN_CLIP_SAMPLES})"
            )
        if not np.all(np.isfinite(x)):
            raise AudioError("clip contains non-finite samples")
        if np.abs(x).max() > 1.0:
            raise AudioError(
                f"clip exceeds full scale (max |sample| = {np.abs(x).max():.4g})"
            )
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelSpectrogram:
    """Raw-scale and log-scale mel views of one clip.

    ``raw`` is nonnegative with full-scale tones near 32768; ``log`` is
    ``ln(max(raw, log_floor))`` and therefore finite everywhere.
    """

    raw: np.ndarray
    log: np.ndarray
    config: MelConfig = field(default_factory=MelConfig)

    def __post_init__(self):
        if self.raw.shape != self.log.shape:
            raise ValueError("raw/log shape mismatch")
        if self.raw.shape[0] != self.config.n_mels:
            raise ValueError(
                f"expected {self.config.n_mels} mel rows, got {self.raw.shape[0]}"
            )
        if np.any(self.raw < 0):
            raise ValueError("raw mel must be nonnegative")
        if not np.all(np.isfinite(self.log)):
            raise ValueError("log mel must be finite")

    @property
    def frames(self) -> int:
        return self.raw.shape[1]

    @property
    def num_samples(self) -> int:
        return self.frames * self.config.hop_length


@dataclass(frozen=True)
class Segment:
    """Aligned (waveform, mel) training pair from :func:`random_segment`.

    ``n_padded`` counts zero samples appended on the right when the source
    clip was shorter than the requested segment.
    """

    clip: AudioClip
    mel: MelSpectrogram
    n_padded: int = 0


# ---------------------------------------------------------------------------
# Mel filterbank
# ---------------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: MelConfig) -> np.ndarray:
    """Hz frequencies of the n_mels + 2 triangle corner points."""
    edges_mel = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    return mel_to_hz(edges_mel)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Unit-peak triangular filters, shape [n_mels, n_fft // 2 + 1], float64."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    edges = mel_band_edges(cfg)
    fb = np.zeros((cfg.n_mels, n_bins), dtype=np.float64)
    for m in range(cfg.n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (fft_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


_BASIS_CACHE: dict[tuple, torch.Tensor] = {}
_WINDOW_CACHE: dict[tuple, torch.Tensor] = {}


def _mel_basis(cfg: MelConfig, dtype: torch.dtype, device: torch.device) -> torch.Tensor:
    key = (cfg, dtype, str(device))
    if key not in _BASIS_CACHE:
        _BASIS_CACHE[key] = torch.from_numpy(mel_filterbank(cfg)).to(dtype=dtype, device=device)
    return _BASIS_CACHE[key]


def _hann(win_length: int, dtype: torch.dtype, device: torch.device) -> torch.Tensor:
    key = (win_length, dtype, str(device))
    if key not in _WINDOW_CACHE:
        _WINDOW_CACHE[key] = torch.hann_window(win_length, dtype=dtype, device=device)
    return _WINDOW_CACHE[key]


# ---------------------------------------------------------------------------
# Mel transform (torch, differentiable; shared with the loss module)
# ---------------------------------------------------------------------------


def waveform_to_raw_mel(wav: torch.Tensor, cfg: MelConfig | None = None) -> torch.Tensor:
    """Raw-scale mel spectrogram of a waveform batch.

    Args:
        wav: [B, L] or [L] waveform in [-1, 1]; L may be any length >= one
            window (it is right-padded with zeros to a hop multiple).

    Returns:
        [B, n_mels, ceil(L / hop)] nonnegative mel magnitudes (or without the
        batch axis when the input had none).
    """
    cfg = cfg or MelConfig()
    squeeze = wav.dim() == 1
    if squeeze:
        wav = wav.unsqueeze(0)
    if wav.dim() != 2:
        raise AudioError(f"expected [B, L] or [L] waveform, got shape {tuple(wav.shape)}")
    n = wav.shape[-1]
    if n < cfg.win_length:
        raise AudioError(
            f"clip of {n} samples is shorter than one window ({cfg.win_length})"
        )
    tail = (-n) % cfg.hop_length
    if tail:
        wav = F.pad(wav, (0, tail))
    edge = cfg.edge_pad
    x = F.pad(wav.unsqueeze(1), (edge, edge), mode="reflect").squeeze(1)
    window = _hann(cfg.win_length, wav.dtype, wav.device)
    spec = torch.stft(
        x,
        n_fft=cfg.n_fft,
        hop_length=cfg.hop_length,
        win_length=cfg.win_length,
        window=window,
        center=False,
        return_complex=True,
    )
    # Window-sum normalization keeps full-scale tones at or below full_scale.
    scale = cfg.full_scale / float(window.sum())
    raw = torch.matmul(_mel_basis(cfg, wav.dtype, wav.device), spec.abs()) * scale
    return raw.squeeze(0) if squeeze else raw


def waveform_to_log_mel(wav: torch.Tensor, cfg: MelConfig | None = None) -> torch.Tensor:
    """Floored natural-log mel view, the network conditioning format."""
    cfg = cfg or MelConfig()
    raw = waveform_to_raw_mel(wav, cfg)
    return torch.log(torch.clamp(raw, min=cfg.log_floor))


def extract_mel(clip: AudioClip, cfg: MelConfig | None = None) -> MelSpectrogram:
    """Mel analysis of one clip; see the module docstring for the framing contract."""
    cfg = cfg or MelConfig()
    with torch.no_grad():
        raw = waveform_to_raw_mel(torch.from_numpy(clip.samples), cfg)
        raw_np = raw.numpy().astype(np.float32)
    log_np = np.log(np.maximum(raw_np, cfg.log_floor))
    return MelSpectrogram(raw=raw_np, log=log_np, config=cfg)


def log_to_raw_mel(log_mel: np.ndarray) -> np.ndarray:
    """Invert the log view (exact above the floor; the floor region recovers
    as log_floor, which the prior clamp makes indistinguishable from zero)."""
    return np.exp(np.asarray(log_mel, dtype=np.float64)).astype(np.float32)


# ---------------------------------------------------------------------------
# File I/O and manifests
# ---------------------------------------------------------------------------


def read_wav(path: str | os.PathLike, expect_sr: int | None = None) -> AudioClip:
    """Load a mono PCM-16 or float-32 WAV file.

    Raises :class:`AudioError` for missing files, non-mono channel layouts,
    unsupported sample formats, and (when ``expect_sr`` is given) sample-rate
    mismatches.  Resampling is never done silently; see :func:`resample_clip`.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise AudioError(f"audio file not found: {path}")
    try:
        sr, data = wavfile.read(path)
    except Exception as exc:
        raise AudioError(f"cannot read {path}: {exc}") from exc
    if data.ndim == 2:
        raise AudioError(
            f"{path}: expected mono audio, got {data.shape[1]} channels"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float32)
    else:
        raise AudioError(
            f"{path}: unsupported sample format {data.dtype}; "
            "use PCM-16 or float-32 WAV"
        )
    if expect_sr is not None and sr != expect_sr:
        raise AudioError(
            f"{path}: sample rate {sr} Hz, expected {expect_sr} Hz "
            "(resample explicitly first)"
        )
    return AudioClip(samples=samples, sample_rate=int(sr))


def write_wav_pcm16(path: str | os.PathLike, clip: AudioClip) -> None:
    data = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(os.fspath(path), clip.sample_rate, data)


def resample_clip(clip: AudioClip, target_sr: int) -> AudioClip:
    """Polyphase resampling; an explicit step, never applied implicitly."""
    if clip.sample_rate == target_sr:
        return clip
    g = np.gcd(clip.sample_rate, target_sr)
    out = resample_poly(clip.samples.astype(np.float64), target_sr // g, clip.sample_rate // g)
    out = np.clip(out, -1.0, 1.0).astype(np.float32)
    return AudioClip(samples=out, sample_rate=target_sr)


@dataclass(frozen=True)
class ClipHandle:
    """Lazily loadable reference to one manifest entry."""

    path: str

    def load(self, expect_sr: int | None = 24000) -> AudioClip:
        return read_wav(self.path, expect_sr=expect_sr)


def load_manifest(path: str | os.PathLike) -> list[ClipHandle]:
    """Read a manifest (one audio path per line, UTF-8) into sorted handles.

    Every entry must exist on disk; relative entries resolve against the
    manifest's directory.  An empty manifest yields an empty list.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise AudioError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    handles = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            entry = line.strip()
            if not entry or entry.startswith("#"):
                continue
            full = entry if os.path.isabs(entry) else os.path.join(base, entry)
            if not os.path.exists(full):
                raise AudioError(f"manifest entry does not exist: {full}")
            handles.append(ClipHandle(path=full))
    handles.sort(key=lambda h: h.path)
    return handles


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def random_segment(
    clip: AudioClip,
    seg_len: int,
    rng_seed: int | np.random.Generator,
    cfg: MelConfig | None = None,
) -> Segment:
    """Draw one hop-aligned training segment plus its mel spectrogram.

    ``seg_len`` must be a hop multiple.  Clips shorter than ``seg_len`` are
    right-padded with zeros and the pad length is reported in the returned
    :class:`Segment`.  Deterministic for a given seed.
    """
    cfg = cfg or MelConfig()
    if seg_len % cfg.hop_length != 0:
        raise ValueError(f"seg_len {seg_len} is not a multiple of hop {cfg.hop_length}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    x = clip.samples
    if x.size >= seg_len:
        start = int(rng.integers(0, x.size - seg_len + 1))
        seg, n_padded = x[start : start + seg_len], 0
    else:
        n_padded = seg_len - x.size
        seg = np.concatenate([x, np.zeros(n_padded, dtype=np.float32)])
    seg_clip = AudioClip(samples=seg, sample_rate=clip.sample_rate)
    return Segment(clip=seg_clip, mel=extract_mel(seg_clip, cfg), n_padded=n_padded)
