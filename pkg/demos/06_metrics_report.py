"""The evaluation harness: objective metrics, identity laws, and the CSV report.

Exercises each metric on a small synthetic corpus -- multi-resolution
spectral distance and warped cepstral distortion between distinct clips and
against themselves (the self-scores must be exactly zero), the dynamic
programming alignment against brute-force path enumeration on a toy grid,
and the real-time-factor probe.  Ends by running the command-line evaluator
in self-check mode, which writes the same CSV report a checkpoint evaluation
would produce.
"""

from pathlib import Path

import numpy as np

from flowvoc import AudioClip, measure_rtf, write_wav_pcm16
from flowvoc.cli import main as cli_main
from flowvoc.metrics import dtw_align, external_metric_adapter, mcd_dtw, mstft_metric
from flowvoc.reference import exhaustive_dtw

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


def main() -> None:
    OUT.mkdir(exist_ok=True)
    a, b = make_clip(0), make_clip(1)

    print("pairwise metrics (clip 0 vs clip 1, then each against itself):")
    print(f"  mstft(a, b) = {mstft_metric(a.samples, b.samples):.4f}")
    print(f"  mcd(a, b)   = {mcd_dtw(a.samples, b.samples):.4f} dB")
    print(f"  mstft(a, a) = {mstft_metric(a.samples, a.samples):g}   (identity law)")
    print(f"  mcd(a, a)   = {mcd_dtw(a.samples, a.samples):g}   (identity law)")

    # Warping backbone: the O(mn) dynamic program must agree with exhaustive
    # enumeration of every monotone path.  Integer costs keep the float sums
    # exact, so the comparison can demand equality rather than closeness.
    rng = np.random.default_rng(7)
    cost = rng.integers(0, 1000, size=(8, 8)).astype(np.float64)
    dp_total, dp_len = dtw_align(cost)
    brute_total, brute_len = exhaustive_dtw(cost)
    print(f"\ndtw on a random 8x8 integer grid: dp=({dp_total:.0f}, {dp_len}) "
          f"enumeration=({brute_total:.0f}, {brute_len}) equal={dp_total == brute_total}")

    # Real-time factor of a trivial "synthesizer" (copies a cached clip):
    # anything above 1 generates faster than playback.
    mel_frames = len(a.samples) // 256
    rtf = measure_rtf(lambda mel: a.samples, [np.zeros((100, mel_frames))])
    print(f"rtf of a copy synthesizer: {rtf:.0f}x real time")

    # External metrics degrade gracefully when their packages are absent.
    print("\nexternal adapters:")
    for name in ("pesq", "periodicity", "vuv_f1"):
        res = external_metric_adapter(name, a.samples, b.samples)
        shown = f"{res.value:.4f}" if res.value is not None else "unavailable"
        print(f"  {name:<12} {shown:<12} ({res.note})")

    # The CLI evaluator in self-check mode: generation is defined as an
    # exact copy of the reference, so every internal metric must hit its
    # identity value across the corpus -- a full-pipeline plumbing test.
    corpus = OUT / "eval_corpus"
    corpus.mkdir(exist_ok=True)
    paths = []
    for i in range(3):
        path = corpus / f"clip_{i}.wav"
        write_wav_pcm16(path, make_clip(i))
        paths.append(path)
    manifest = corpus / "manifest.txt"
    manifest.write_text("".join(f"{p}\n" for p in paths))

    csv_path = OUT / "self_check.csv"
    code = cli_main(["eval", "--manifest", str(manifest), "--self-check", "--out", str(csv_path)])
    print(f"\ncli eval exit code {code}; report head:")
    for line in csv_path.read_text().splitlines()[:10]:
        print(f"  {line}")


if __name__ == "__main__":
    main()
