"""Slow, independent re-implementations used to cross-check the fast kernels.

Everything here is numpy float64, written as plain loops and explicit DFT
matrix products: no FFT, no conv2d, no shared code with the torch loss path.
The point is independence, not speed; inputs are expected to be a few
thousand samples at most.
"""

from __future__ import annotations

import math

import numpy as np

from .losses import LegacyStftConfig, StftConfig


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window, 0.5 - 0.5 cos(2 pi n / N)."""
    n = np.arange(length, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * n / length)


def naive_stft(x: np.ndarray, n_fft: int, hop: int, win_length: int) -> np.ndarray:
    """One-sided centered STFT via an explicit DFT matrix product.

    Matches the fast path's conventions: zero center padding of n_fft/2 per
    side, window zero-padded symmetrically to n_fft, frame starts at
    multiples of hop, rows 0..n_fft/2.  Returns complex128 [freq, frames].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("naive_stft handles a single 1-D waveform")
    if win_length > n_fft:
        raise ValueError("window longer than FFT size")
    win = hann_window(win_length)
    left = (n_fft - win_length) // 2
    win_full = np.zeros(n_fft, dtype=np.float64)
    win_full[left : left + win_length] = win

    pad = n_fft // 2
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    n_frames = 1 + (len(xp) - n_fft) // hop
    if n_frames < 1:
        raise ValueError("waveform too short for one frame")

    n_bins = n_fft // 2 + 1
    k = np.arange(n_bins)[:, None]
    n = np.arange(n_fft)[None, :]
    basis = np.exp(-2j * math.pi * k * n / n_fft)

    grid = np.empty((n_bins, n_frames), dtype=np.complex128)
    for tau in range(n_frames):
        frame = xp[tau * hop : tau * hop + n_fft] * win_full
        grid[:, tau] = basis @ frame
    return grid


# ---------------------------------------------------------------------------
# Stencil operators, cell by cell
# ---------------------------------------------------------------------------


def _pad_zeros(grid: np.ndarray, left: int, right: int, top: int, bottom: int) -> np.ndarray:
    f, t = grid.shape
    out = np.zeros((f + top + bottom, t + left + right), dtype=np.float64)
    out[top : top + f, left : left + t] = grid
    return out


def naive_filter_time(grid: np.ndarray) -> np.ndarray:
    """[[-1,1],[-2,2],[-1,1]]/4 correlation with pad (left 1, top 1, bottom 1)."""
    g = _pad_zeros(np.asarray(grid, dtype=np.float64), 1, 0, 1, 1)
    f, t = grid.shape
    out = np.empty((f, t), dtype=np.float64)
    for i in range(f):
        for j in range(t):
            out[i, j] = (
                -g[i, j] + g[i, j + 1]
                - 2.0 * g[i + 1, j] + 2.0 * g[i + 1, j + 1]
                - g[i + 2, j] + g[i + 2, j + 1]
            ) / 4.0
    return out


def naive_filter_freq(grid: np.ndarray) -> np.ndarray:
    """[[-1,-2,-1],[1,2,1]]/4 correlation with pad (left 1, right 1, top 1)."""
    g = _pad_zeros(np.asarray(grid, dtype=np.float64), 1, 1, 1, 0)
    f, t = grid.shape
    out = np.empty((f, t), dtype=np.float64)
    for i in range(f):
        for j in range(t):
            out[i, j] = (
                -g[i, j] - 2.0 * g[i, j + 1] - g[i, j + 2]
                + g[i + 1, j] + 2.0 * g[i + 1, j + 1] + g[i + 1, j + 2]
            ) / 4.0
    return out


def naive_filter_laplacian(grid: np.ndarray) -> np.ndarray:
    """8-center Laplacian/8 correlation with pad 1 all around."""
    g = _pad_zeros(np.asarray(grid, dtype=np.float64), 1, 1, 1, 1)
    f, t = grid.shape
    out = np.empty((f, t), dtype=np.float64)
    for i in range(f):
        for j in range(t):
            acc = 8.0 * g[i + 1, j + 1]
            for di in range(3):
                for dj in range(3):
                    if di == 1 and dj == 1:
                        continue
                    acc -= g[i + di, j + dj]
            out[i, j] = acc / 8.0
    return out


# ---------------------------------------------------------------------------
# Loss assemblies
# ---------------------------------------------------------------------------


def _wrap(delta: float) -> float:
    return math.atan2(math.sin(delta), math.cos(delta))


def naive_stft_loss(x: np.ndarray, xhat: np.ndarray, cfg: StftConfig | None = None) -> float:
    """Phase + log-mag + weighted stencil MSEs, averaged over resolutions."""
    cfg = cfg or StftConfig()
    total = 0.0
    for r in range(cfg.n_resolutions):
        gx = naive_stft(x, cfg.fft_sizes[r], cfg.hop_sizes[r], cfg.win_lengths[r])
        gy = naive_stft(xhat, cfg.fft_sizes[r], cfg.hop_sizes[r], cfg.win_lengths[r])
        sq_x = gx.real**2 + gx.imag**2
        sq_y = gy.real**2 + gy.imag**2
        mask = (sq_x > cfg.mag_floor) & (sq_y > cfg.mag_floor)
        mag_x = np.sqrt(sq_x + cfg.mag_floor)
        mag_y = np.sqrt(sq_y + cfg.mag_floor)

        if mask.any():
            acc = 0.0
            cnt = 0
            f, t = mask.shape
            for i in range(f):
                for j in range(t):
                    if mask[i, j]:
                        dp = math.atan2(gx.imag[i, j], gx.real[i, j]) - math.atan2(
                            gy.imag[i, j], gy.real[i, j]
                        )
                        acc += abs(_wrap(dp))
                        cnt += 1
            total += acc / cnt
        total += float(np.mean(np.abs(np.log(mag_x) - np.log(mag_y))))

        d_t = naive_filter_time(mag_x) - naive_filter_time(mag_y)
        d_f = naive_filter_freq(mag_x) - naive_filter_freq(mag_y)
        lap = naive_filter_laplacian(mag_x) - naive_filter_laplacian(mag_y)
        total += 4.0 * float(np.mean(d_f**2))
        total += 4.0 * float(np.mean(d_t**2))
        total += 2.0 * float(np.mean(lap**2))
    return total / cfg.n_resolutions


def naive_original_stft_loss(
    x: np.ndarray, xhat: np.ndarray, cfg: LegacyStftConfig | None = None
) -> float:
    """Spectral convergence on raw magnitudes + floored log-magnitude L1."""
    cfg = cfg or LegacyStftConfig()
    total = 0.0
    for r in range(cfg.n_resolutions):
        mag_x = np.abs(naive_stft(x, cfg.fft_sizes[r], cfg.hop_sizes[r], cfg.win_lengths[r]))
        mag_y = np.abs(naive_stft(xhat, cfg.fft_sizes[r], cfg.hop_sizes[r], cfg.win_lengths[r]))
        sc = math.sqrt(float(np.sum((mag_x - mag_y) ** 2))) / math.sqrt(float(np.sum(mag_x**2)))
        log_mag = float(
            np.mean(
                np.abs(
                    np.log(np.maximum(mag_x, cfg.mag_floor))
                    - np.log(np.maximum(mag_y, cfg.mag_floor))
                )
            )
        )
        total += sc + log_mag
    return total / cfg.n_resolutions


# ---------------------------------------------------------------------------
# Exhaustive DTW
# ---------------------------------------------------------------------------


def exhaustive_dtw(cost: np.ndarray) -> tuple[float, int]:
    """Minimum total cost over every monotone path, by full enumeration.

    Steps are right, down, and diagonal from (0, 0) to (m-1, n-1).  Returns
    (total cost, number of visited cells) of the best path.  Exponential in
    the grid size, so keep inputs around 10x10.
    """
    cost = np.asarray(cost, dtype=np.float64)
    m, n = cost.shape
    best: list = [math.inf, 0]

    def walk(i: int, j: int, acc: float, length: int) -> None:
        acc += cost[i, j]
        length += 1
        if i == m - 1 and j == n - 1:
            if acc < best[0]:
                best[0] = acc
                best[1] = length
            return
        if i + 1 < m and j + 1 < n:
            walk(i + 1, j + 1, acc, length)
        if i + 1 < m:
            walk(i + 1, j, acc, length)
        if j + 1 < n:
            walk(i, j + 1, acc, length)

    walk(0, 0, 0.0, 0)
    return best[0], best[1]
