"""Shared fixtures: a deterministic synthetic speech-like corpus on disk."""

import numpy as np
import pytest
import torch
from hypothesis import settings

from flowvoc.audio import AudioClip, MelConfig, extract_mel, write_wav_pcm16

settings.register_profile("ci", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("ci")

SR = 24000
CLIP_LEN = 16384  # 64 hops, ~0.68 s: long enough for MCD, synthesizable whole


def synth_clip(seed: int, n: int = CLIP_LEN, sr: int = SR) -> AudioClip:
    """Harmonic tone with a slow amplitude envelope plus a little noise.

    Deterministic per seed; peak 0.8 so PCM-16 round trips stay in range.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sr
    f0 = rng.uniform(80.0, 300.0)
    sig = np.zeros(n)
    for k in range(1, 4):
        amp = rng.uniform(0.2, 1.0) / k
        sig += amp * np.sin(2 * np.pi * f0 * k * t + rng.uniform(0, 2 * np.pi))
    rate = rng.uniform(0.5, 2.0)
    env = 0.5 * (1.0 + np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    sig = sig * env + 0.002 * rng.standard_normal(n)
    sig = 0.8 * sig / np.max(np.abs(sig))
    return AudioClip(samples=sig.astype(np.float32), sample_rate=sr)


@pytest.fixture(scope="session")
def mel_cfg() -> MelConfig:
    return MelConfig()


@pytest.fixture(scope="session")
def corpus_clips() -> list[AudioClip]:
    return [synth_clip(seed) for seed in range(10)]


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, corpus_clips):
    root = tmp_path_factory.mktemp("corpus")
    paths = []
    for i, clip in enumerate(corpus_clips):
        path = root / f"clip_{i:02d}.wav"
        write_wav_pcm16(path, clip)
        paths.append(path)
    manifest = root / "manifest.txt"
    manifest.write_text("".join(f"{p}\n" for p in paths))
    return root


@pytest.fixture(scope="session")
def manifest_path(corpus_dir):
    return corpus_dir / "manifest.txt"


@pytest.fixture(scope="session")
def corpus_mels(corpus_clips, mel_cfg):
    return [extract_mel(clip, mel_cfg) for clip in corpus_clips]


@pytest.fixture()
def single_thread():
    """Pin torch to one thread for bit-reproducibility-sensitive tests."""
    old = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(old)
