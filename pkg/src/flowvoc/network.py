"""Asymmetric U-Net that maps (noisy waveform, time, log-mel) to clean audio.

The downsampling side is deliberately light: strided convolutions plus short
single-dilation residual stacks, since its features only steer the decoder.
The upsampling side carries most of the parameters: transposed convolutions
from mel-frame rate up to sample rate, each followed by a multi-receptive
field stack of dilated residual blocks with snake-beta activations.  Time
enters as a 128-dim sinusoidal embedding expanded through two linear-SiLU
layers and added, per level, on the downsampling path.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import torch
from torch import nn


class CheckpointError(RuntimeError):
    """Raised when a checkpoint is unreadable or its config does not match."""


@dataclass(frozen=True)
class NetworkConfig:
    mel_bands: int = 100
    upsample_factors: tuple[int, ...] = (8, 8, 2, 2)
    up_channels: tuple[int, ...] = (512, 256, 128, 64, 32)
    down_channels: tuple[int, ...] = (16, 32, 64, 128, 192)
    up_kernels: tuple[int, ...] = (3, 7, 11)
    up_dilations: tuple[int, ...] = (1, 3, 5)
    down_kernels: tuple[int, ...] = (3, 7, 11, 15)
    down_dilations: tuple[int, ...] = (1,)
    stem_kernel: int = 7
    time_embed_dim: int = 128
    time_hidden_dim: int = 512
    snake_eps: float = 1e-8

    def __post_init__(self):
        n = len(self.upsample_factors)
        if len(self.up_channels) != n + 1 or len(self.down_channels) != n + 1:
            raise ValueError("channel lists must have one more entry than factors")
        if any(f < 2 or f % 2 for f in self.upsample_factors):
            raise ValueError("upsample factors must be even and >= 2")
        if self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even")
        if any(k % 2 == 0 for k in self.up_kernels + self.down_kernels + (self.stem_kernel,)):
            raise ValueError("kernels must be odd for same padding")

    @property
    def total_upsample(self) -> int:
        out = 1
        for f in self.upsample_factors:
            out *= f
        return out

    @staticmethod
    def tiny() -> "NetworkConfig":
        """Sub-1M-parameter config for smoke tests; keeps the 256x shape."""
        return NetworkConfig(
            up_channels=(64, 32, 16, 8, 8),
            down_channels=(4, 8, 8, 12, 16),
            time_hidden_dim=64,
        )


def snake_beta(x: torch.Tensor, alpha: torch.Tensor, beta: torch.Tensor, eps: float = 1e-8):
    """x + sin^2(e^alpha x) / (e^beta + eps), alpha/beta per channel.

    ``x`` is [B, C, L]; alpha and beta are length-C log-scale vectors.
    """
    a = alpha.exp().unsqueeze(0).unsqueeze(-1)
    b = beta.exp().unsqueeze(0).unsqueeze(-1)
    return x + torch.sin(a * x) ** 2 / (b + eps)


class SnakeBeta(nn.Module):
    def __init__(self, channels: int, eps: float = 1e-8):
        super().__init__()
        self.alpha = nn.Parameter(torch.zeros(channels))
        self.beta = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return snake_beta(x, self.alpha, self.beta, self.eps)


def time_embedding(t: torch.Tensor, dim: int = 128) -> torch.Tensor:
    """Sinusoidal embedding of t in [0, 1], scaled by 100.

    Returns [B, dim]: first half sines, second half cosines, at frequencies
    100 * 10^(4k/(dim/2 - 1)).
    """
    if t.dim() == 0:
        t = t.unsqueeze(0)
    if torch.any(t < 0) or torch.any(t > 1):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    half = dim // 2
    k = torch.arange(half, dtype=t.dtype, device=t.device)
    freqs = 100.0 * torch.pow(10.0, 4.0 * k / (half - 1))
    phase = t.unsqueeze(-1) * freqs
    return torch.cat([torch.sin(phase), torch.cos(phase)], dim=-1)


class ResBlock(nn.Module):
    """x + conv_k(snake(conv_{k,d}(snake(x)))), channels preserved."""

    def __init__(self, channels: int, kernel: int, dilation: int, eps: float):
        super().__init__()
        self.act1 = SnakeBeta(channels, eps)
        self.conv1 = nn.Conv1d(
            channels, channels, kernel, dilation=dilation, padding=dilation * (kernel - 1) // 2
        )
        self.act2 = SnakeBeta(channels, eps)
        self.conv2 = nn.Conv1d(channels, channels, kernel, padding=(kernel - 1) // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act2(self.conv1(self.act1(x))))


class ResLayer(nn.Module):
    """Kernel-by-dilation residual matrix: sequential over dilations within a
    kernel, averaged across kernels."""

    def __init__(self, channels: int, kernels: tuple, dilations: tuple, eps: float):
        super().__init__()
        self.branches = nn.ModuleList(
            nn.Sequential(*(ResBlock(channels, k, d, eps) for d in dilations)) for k in kernels
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        acc = None
        for branch in self.branches:
            y = branch(x)
            acc = y if acc is None else acc + y
        return acc / len(self.branches)


class UNetVocoder(nn.Module):
    """Predicts clean audio from (x_t, t, mel); output in [-1, 1] via tanh."""

    def __init__(self, cfg: NetworkConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or NetworkConfig()
        pad = (cfg.stem_kernel - 1) // 2
        down_strides = tuple(reversed(cfg.upsample_factors))
        dch, uch = cfg.down_channels, cfg.up_channels

        self.down_stem = nn.Conv1d(1, dch[0], cfg.stem_kernel, padding=pad)
        self.down_convs = nn.ModuleList(
            nn.Conv1d(dch[i], dch[i + 1], 2 * s, stride=s, padding=s // 2)
            for i, s in enumerate(down_strides)
        )
        self.down_res = nn.ModuleList(
            ResLayer(dch[i + 1], cfg.down_kernels, cfg.down_dilations, cfg.snake_eps)
            for i in range(len(down_strides))
        )

        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_embed_dim, cfg.time_hidden_dim),
            nn.SiLU(),
            nn.Linear(cfg.time_hidden_dim, cfg.time_hidden_dim),
            nn.SiLU(),
        )
        self.time_proj = nn.ModuleList(
            nn.Linear(cfg.time_hidden_dim, dch[i + 1]) for i in range(len(down_strides))
        )

        self.mel_stem = nn.Conv1d(cfg.mel_bands, uch[0], cfg.stem_kernel, padding=pad)
        self.up_convs = nn.ModuleList(
            nn.ConvTranspose1d(uch[i], uch[i + 1], 2 * f, stride=f, padding=f // 2)
            for i, f in enumerate(cfg.upsample_factors)
        )
        self.up_res = nn.ModuleList(
            ResLayer(uch[i + 1], cfg.up_kernels, cfg.up_dilations, cfg.snake_eps)
            for i in range(len(cfg.upsample_factors))
        )

        # Skip projections, finest resolution first: stem output, then each
        # downsampling level.  skip_proj[i] feeds the decoder point whose
        # resolution matches down feature i.
        self.skip_proj = nn.ModuleList(
            [nn.Conv1d(dch[0], uch[-1], 1)]
            + [
                nn.Conv1d(dch[i + 1], uch[len(uch) - 2 - i], 1)
                for i in range(len(down_strides))
            ]
        )

        self.head_act = SnakeBeta(uch[-1], cfg.snake_eps)
        self.head = nn.Conv1d(uch[-1], 1, cfg.stem_kernel, padding=pad)

    def forward(self, x: torch.Tensor, t: torch.Tensor | float, mel: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if x.dim() != 2:
            raise ValueError(f"expected waveform [B, L], got shape {tuple(x.shape)}")
        b, length = x.shape
        if length % cfg.total_upsample:
            raise ValueError(f"length {length} not a multiple of {cfg.total_upsample}")
        if mel.shape != (b, cfg.mel_bands, length // cfg.total_upsample):
            raise ValueError(
                f"mel shape {tuple(mel.shape)} does not match waveform "
                f"[{b}, {cfg.mel_bands}, {length // cfg.total_upsample}]"
            )
        if not torch.isfinite(x).all() or not torch.isfinite(mel).all():
            raise ValueError("non-finite network input")

        t = torch.as_tensor(t, dtype=x.dtype, device=x.device)
        if t.dim() == 0:
            t = t.expand(b)
        temb = self.time_mlp(time_embedding(t, cfg.time_embed_dim))

        h = self.down_stem(x.unsqueeze(1))
        down_feats = [h]
        for conv, res, proj in zip(self.down_convs, self.down_res, self.time_proj):
            h = conv(h) + proj(temb).unsqueeze(-1)
            h = res(h)
            down_feats.append(h)

        u = self.mel_stem(mel) + self.skip_proj[-1](down_feats[-1])
        for i, (up, res) in enumerate(zip(self.up_convs, self.up_res)):
            u = up(u) + self.skip_proj[len(self.skip_proj) - 2 - i](
                down_feats[len(down_feats) - 2 - i]
            )
            u = res(u)

        return torch.tanh(self.head(self.head_act(u))).squeeze(1)


def build_network(cfg: NetworkConfig | None = None) -> UNetVocoder:
    return UNetVocoder(cfg)


def count_params(cfg: NetworkConfig | None = None) -> int:
    model = UNetVocoder(cfg)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path,
    model: UNetVocoder,
    step: int,
    distilled: bool = False,
    optimizer_state: dict | None = None,
    scheduler_state: dict | None = None,
    ema_state: dict | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(model.cfg),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "step": int(step),
        "distilled": bool(distilled),
        "optimizer_state": optimizer_state,
        "scheduler_state": scheduler_state,
        "ema_state": ema_state,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_cfg: NetworkConfig | None = None) -> dict:
    """Load a checkpoint payload; validates version and (optionally) config.

    A config mismatch is an error: parameters are never silently reshaped.
    Returns the payload dict with ``config`` replaced by a NetworkConfig.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a recognized checkpoint file")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint format {payload['format_version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    raw = payload["config"]
    cfg = NetworkConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
    if expected_cfg is not None and cfg != expected_cfg:
        diff = [
            f"{f.name}: checkpoint={getattr(cfg, f.name)} expected={getattr(expected_cfg, f.name)}"
            for f in dataclasses.fields(NetworkConfig)
            if getattr(cfg, f.name) != getattr(expected_cfg, f.name)
        ]
        raise CheckpointError("config mismatch: " + "; ".join(diff))
    payload["config"] = cfg
    return payload


def load_network(path, expected_cfg: NetworkConfig | None = None) -> tuple[UNetVocoder, dict]:
    payload = load_checkpoint(path, expected_cfg)
    model = UNetVocoder(payload["config"])
    model.load_state_dict(payload["state_dict"])
    return model, payload
