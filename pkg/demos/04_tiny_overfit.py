"""Overfitting a sub-1M-parameter model on a four-clip synthetic corpus.

A quick, CPU-friendly version of the memorization check used in the
acceptance suite: train the tiny network configuration with flow-matching on
a handful of deterministic harmonic clips and watch the 6-step synthesis
quality (log-mel L1 against the originals) improve over the run.  A few
hundred steps will not reach the full-run quality, but the loss curve and
the before/after mel distance already show the pipeline learning.

    python3 demos/04_tiny_overfit.py --steps 200
"""

import argparse
import time
from pathlib import Path

import numpy as np
import torch

from flowvoc import (
    AudioClip,
    MelConfig,
    NetworkConfig,
    TrainConfig,
    Trainer,
    UNetVocoder,
    count_params,
    extract_mel,
    make_training_batch,
    mel_l1,
    sample_euler,
)

OUT = Path(__file__).resolve().parent / "out"


def make_clip(seed: int, n: int = 16384, sr: int = 24000) -> AudioClip:
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sr
    f0 = rng.uniform(80.0, 300.0)
    sig = np.zeros(n)
    for k in range(1, 4):
        sig += rng.uniform(0.2, 1.0) / k * np.sin(2 * np.pi * f0 * k * t + rng.uniform(0, 2 * np.pi))
    env = 0.5 * (1.0 + np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi)))
    sig = sig * env + 0.002 * rng.standard_normal(n)
    sig = 0.8 * sig / np.max(np.abs(sig))
    return AudioClip(samples=sig.astype(np.float32), sample_rate=sr)


def corpus_mel_l1(net, clips, mels, n_steps: int, seed: int = 0) -> float:
    """Mean log-mel L1 between each clip and its n-step resynthesis."""
    net.eval()
    vals = []
    with torch.no_grad():
        for i, (clip, mel) in enumerate(zip(clips, mels)):
            log_mel = torch.from_numpy(mel.log).unsqueeze(0)
            wav = sample_euler(net, log_mel, n_steps, rng_seed=seed + i)
            x = torch.from_numpy(clip.samples)
            vals.append(float(mel_l1(x, wav.squeeze(0))))
    net.train()
    return float(np.mean(vals))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--clips", type=int, default=4)
    args = ap.parse_args()
    OUT.mkdir(exist_ok=True)

    clips = [make_clip(seed) for seed in range(args.clips)]
    mels = [extract_mel(clip, MelConfig()) for clip in clips]

    torch.manual_seed(0)
    net = UNetVocoder(NetworkConfig.tiny())
    print(f"tiny network: {count_params(NetworkConfig.tiny()):,} parameters")

    cfg = TrainConfig(
        lr_init=1e-3, lr_final=1e-5, batch=4, steps=args.steps, seed=1234,
        seg_len=4096, log_every=max(args.steps // 10, 1),
    )
    trainer = Trainer(net, cfg)

    base = corpus_mel_l1(net, clips, mels, n_steps=6)
    print(f"before training: 6-step synthesis mel_l1 = {base:.4f}\n")

    t0 = time.time()
    for step in range(args.steps):
        x1, log_mel = make_training_batch(clips, cfg.batch, cfg.seg_len, trainer.rng)
        report = trainer.train_step(x1, log_mel)
        if (step + 1) % cfg.log_every == 0:
            print(report.to_log_line(step=step + 1, lr=trainer.lr))
    print(f"\ntrained {args.steps} steps in {time.time() - t0:.1f} s "
          f"({(time.time() - t0) / args.steps:.2f} s/step)")

    final = corpus_mel_l1(net, clips, mels, n_steps=6)
    print(f"after training:  6-step synthesis mel_l1 = {final:.4f} "
          f"({final / base:.1%} of the starting value)")

    ckpt = OUT / "tiny_overfit.pt"
    trainer.save(ckpt)
    print(f"saved {ckpt}")


if __name__ == "__main__":
    main()
