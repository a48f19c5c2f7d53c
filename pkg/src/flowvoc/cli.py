"""Command-line surface: train, distill, synth, eval, oracle, plot-spectrograms.

Every command resolves its configuration as default < config file < --set
overrides, writes the resolved tree next to any checkpoints it produces, and
exits 0 on success / nonzero on any hard error.  --deterministic forces
single-threaded deterministic kernels for bit-reproducible runs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import os
import shutil
import sys

import numpy as np
import torch

from . import distill as distill_mod
from . import flow, losses, metrics, network, reference
from .audio import (
    AudioClip,
    AudioError,
    extract_mel,
    load_manifest,
    read_wav,
    write_wav_pcm16,
)
from .config import ConfigError, resolve_run_config, save_run_config
from .network import CheckpointError


def _apply_determinism(args) -> None:
    if getattr(args, "deterministic", False):
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def _resolve(args):
    return resolve_run_config(args.config, args.set, args.seed)


def _save_rotating(saver, ckpt_dir: str, keep: int, prefix: str, latest: str) -> str:
    path = os.path.join(ckpt_dir, f"{prefix}_{saver.step_index:08d}.pt")
    saver.save(path)
    shutil.copyfile(path, os.path.join(ckpt_dir, latest))
    tagged = sorted(glob.glob(os.path.join(ckpt_dir, f"{prefix}_*.pt")))
    for old in tagged[: -max(keep, 1)]:
        os.remove(old)
    return path


def _load_corpus(manifest: str, sample_rate: int) -> list[AudioClip]:
    handles = load_manifest(manifest)
    if not handles:
        raise AudioError(f"manifest {manifest} lists no audio files")
    return [h.load(expect_sr=sample_rate) for h in handles]


# ---------------------------------------------------------------------------
# train / distill
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    rc = _resolve(args)
    _apply_determinism(args)
    os.makedirs(rc.checkpoint_dir, exist_ok=True)
    os.makedirs(rc.log_dir, exist_ok=True)
    save_run_config(rc, os.path.join(rc.checkpoint_dir, "config.yaml"))

    torch.manual_seed(rc.seed)
    net = network.UNetVocoder(rc.network)
    train_cfg = dataclasses.replace(rc.train, seed=rc.seed)
    trainer = flow.Trainer(net, train_cfg, rc.weights, rc.mel, rc.stft)

    if args.resume:
        resume_path = (
            os.path.join(rc.checkpoint_dir, "latest.pt")
            if args.resume is True
            else args.resume
        )
        payload = network.load_checkpoint(resume_path, expected_cfg=rc.network)
        trainer.restore(payload)
        print(f"resumed from {resume_path} at step {trainer.step_index}")

    clips = _load_corpus(rc.manifest, rc.mel.sample_rate)
    log_path = os.path.join(rc.log_dir, "train.log")
    with open(log_path, "a", encoding="utf-8") as log_fh:
        while trainer.step_index < train_cfg.steps:
            step = trainer.step_index
            lr_now = trainer.lr
            x1, mel = flow.make_training_batch(
                clips, train_cfg.batch, train_cfg.seg_len, trainer.rng, rc.mel
            )
            report = trainer.train_step(x1, mel)
            if step % train_cfg.log_every == 0 or report.diverged:
                line = report.to_log_line(step=step, lr=lr_now)
                print(line)
                log_fh.write(line + "\n")
                log_fh.flush()
            if trainer.step_index % train_cfg.checkpoint_every == 0:
                _save_rotating(trainer, rc.checkpoint_dir, args.keep, "step", "latest.pt")
    final = _save_rotating(trainer, rc.checkpoint_dir, args.keep, "step", "latest.pt")
    print(f"finished at step {trainer.step_index}; checkpoint {final}")
    return 0


def cmd_distill(args) -> int:
    rc = _resolve(args)
    _apply_determinism(args)
    os.makedirs(rc.checkpoint_dir, exist_ok=True)
    os.makedirs(rc.log_dir, exist_ok=True)
    save_run_config(rc, os.path.join(rc.checkpoint_dir, "config.yaml"))

    teacher, _ = network.load_network(args.teacher, expected_cfg=rc.network)
    student, _ = network.load_network(args.teacher)
    distill_cfg = dataclasses.replace(rc.distill, seed=rc.seed)
    distiller = distill_mod.Distiller(
        student, teacher, distill_cfg, rc.weights, rc.mel, rc.stft
    )

    clips = _load_corpus(rc.manifest, rc.mel.sample_rate)
    log_path = os.path.join(rc.log_dir, "distill.log")
    with open(log_path, "a", encoding="utf-8") as log_fh:
        while distiller.step_index < distill_cfg.steps:
            step = distiller.step_index
            x1, mel = flow.make_training_batch(
                clips, rc.train.batch, rc.train.seg_len, distiller.rng, rc.mel
            )
            report = distiller.distill_step(x1, mel)
            if step % distill_cfg.log_every == 0 or report.diverged:
                line = report.to_log_line(step=step, lr=distill_cfg.lr_init)
                print(line)
                log_fh.write(line + "\n")
                log_fh.flush()
            if distiller.step_index % distill_cfg.checkpoint_every == 0:
                _save_rotating(
                    distiller, rc.checkpoint_dir, args.keep, "student", "student_latest.pt"
                )
    final = _save_rotating(
        distiller, rc.checkpoint_dir, args.keep, "student", "student_latest.pt"
    )
    print(f"distillation finished at step {distiller.step_index}; checkpoint {final}")
    return 0


# ---------------------------------------------------------------------------
# synth / eval
# ---------------------------------------------------------------------------


def _load_mel_input(path: str, mel_cfg) -> np.ndarray:
    """Log-mel [n_mels, frames] from a WAV (copy synthesis) or .npy file."""
    if path.endswith(".npy"):
        arr = np.load(path)
        if arr.ndim != 2 or arr.shape[0] != mel_cfg.n_mels:
            raise AudioError(
                f"{path}: expected log-mel [{mel_cfg.n_mels}, frames], got {arr.shape}"
            )
        return arr.astype(np.float32)
    clip = read_wav(path, expect_sr=mel_cfg.sample_rate)
    return extract_mel(clip, mel_cfg).log


def _synthesize(net, payload, log_mel: np.ndarray, n_steps: int, seed, mel_cfg) -> np.ndarray:
    mel_t = torch.from_numpy(log_mel).unsqueeze(0)
    if n_steps == 1 and payload.get("distilled"):
        wav = distill_mod.one_step_synthesize(net, mel_t, seed, mel_cfg)
    else:
        wav = flow.sample_euler(net, mel_t, n_steps, seed, mel_cfg)
    return wav.squeeze(0).numpy()


def cmd_synth(args) -> int:
    rc = _resolve(args)
    _apply_determinism(args)
    if args.steps < 1:
        raise ValueError(f"--steps must be at least 1, got {args.steps}")
    net, payload = network.load_network(args.ckpt)
    os.makedirs(args.out_dir, exist_ok=True)
    for path in args.inputs:
        log_mel = _load_mel_input(path, rc.mel)
        wav = _synthesize(net, payload, log_mel, args.steps, rc.seed, rc.mel)
        stem = os.path.splitext(os.path.basename(path))[0]
        out_path = os.path.join(args.out_dir, f"{stem}.wav")
        write_wav_pcm16(out_path, AudioClip(wav, rc.mel.sample_rate))
        print(out_path)
    return 0


def cmd_eval(args) -> int:
    rc = _resolve(args)
    _apply_determinism(args)
    extra_site = os.environ.get("FLOWVOC_EXTRA_SITE")
    if extra_site:
        sys.path.insert(0, extra_site)
        print(f"external tool path: {extra_site}")

    handles = load_manifest(args.manifest)
    if not handles:
        raise AudioError(f"manifest {args.manifest} lists no audio files")

    if args.self_check:
        net, payload = None, {}
    else:
        net, payload = network.load_network(args.ckpt)

    def synth_for(clip: AudioClip) -> np.ndarray:
        if args.self_check:
            return clip.samples.copy()
        log_mel = extract_mel(clip, rc.mel).log
        return _synthesize(net, payload, log_mel, args.steps, rc.seed, rc.mel)

    first_clip = handles[0].load(expect_sr=rc.mel.sample_rate)
    rtf = metrics.measure_rtf(
        synth_for, first_clip, repeats=args.repeats, sample_rate=rc.mel.sample_rate
    )

    rows: list[list[str]] = []
    reports: list[metrics.MetricReport] = []
    adapter_notes: set[str] = set()
    for handle in handles:
        name = os.path.basename(handle.path)
        try:
            ref = handle.load(expect_sr=rc.mel.sample_rate)
            gen = synth_for(ref)
            pesq_r = metrics.external_metric_adapter("pesq", ref.samples, gen)
            per_r = metrics.external_metric_adapter("periodicity", ref.samples, gen)
            vuv_r = metrics.external_metric_adapter("vuv_f1", ref.samples, gen)
            for r in (pesq_r, per_r, vuv_r):
                if not r.available and r.note:
                    adapter_notes.add(r.note)
            report = metrics.MetricReport(
                mstft=metrics.mstft_metric(ref.samples, gen),
                mcd=metrics.mcd_dtw(ref.samples, gen, rc.mel, gate_frac=args.gate_frac),
                rtf=rtf,
                pesq=pesq_r.value,
                periodicity=per_r.value,
                vuv_f1=vuv_r.value,
            )
            reports.append(report)
            rows.append([name] + report.to_csv_row())
        except Exception as exc:
            print(f"clip {name} failed: {exc}", file=sys.stderr)
            rows.append([name] + [f"failed: {exc}"] * len(metrics.MetricReport.csv_columns))

    def aggregate(column: str) -> str:
        values = [getattr(r, column) for r in reports]
        if not values or any(v is None for v in values):
            return metrics.UNAVAILABLE
        return str(float(np.mean(values)))

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# energy_gate_frac={args.gate_frac}\n")
        fh.write(f"# n_steps={args.steps} self_check={args.self_check}\n")
        for note in sorted(adapter_notes):
            fh.write(f"# adapter: {note}\n")
        writer = csv.writer(fh)
        writer.writerow(["utterance"] + list(metrics.MetricReport.csv_columns))
        writer.writerows(rows)
        if reports:
            writer.writerow(
                ["mean"] + [aggregate(c) for c in metrics.MetricReport.csv_columns]
            )
    print(f"wrote {args.out} ({len(reports)}/{len(handles)} clips evaluated)")
    return 0


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def _oracle_gaussian_flow(args) -> bool:
    ok = True
    for mu, s0, s1 in ((0.0, 1.0, 1.0), (5.0, 1.0, 0.1)):
        mean_err, var_err = flow.analytic_gaussian_flow_check(
            mu, s0, s1, n_steps=args.steps, n_trials=args.trials, rng_seed=args.seed or 0
        )
        passed = mean_err < 0.03 and var_err < 0.03
        ok &= passed
        print(
            f"gaussian_flow mu={mu} s0={s0} s1={s1}: mean_err={mean_err:.5f} "
            f"var_err={var_err:.5f} tol=0.03 [{'PASS' if passed else 'FAIL'}]"
        )
    return ok


def _oracle_loss_equivalence(args) -> bool:
    rng = np.random.default_rng(args.seed or 0)
    worst = 0.0
    for _ in range(args.pairs):
        n = int(rng.integers(1024, 4097))
        x = rng.uniform(-0.9, 0.9, n)
        y = rng.uniform(-0.9, 0.9, n)
        xt = torch.from_numpy(x)
        yt = torch.from_numpy(y)
        fast_new = float(losses.stft_loss(xt, yt))
        fast_old = float(losses.original_stft_loss(xt, yt))
        naive_new = reference.naive_stft_loss(x, y)
        naive_old = reference.naive_original_stft_loss(x, y)
        worst = max(
            worst,
            abs(fast_new - naive_new) / abs(naive_new),
            abs(fast_old - naive_old) / abs(naive_old),
        )
    grid = rng.uniform(0.0, 2.0, (48, 24))
    gt = torch.from_numpy(grid)
    pairs = (
        (losses.filter_time, reference.naive_filter_time),
        (losses.filter_freq, reference.naive_filter_freq),
        (losses.filter_laplacian, reference.naive_filter_laplacian),
    )
    for fast_fn, naive_fn in pairs:
        fast = fast_fn(gt).numpy()
        naive = naive_fn(grid)
        denom = max(float(np.abs(naive).max()), 1e-12)
        worst = max(worst, float(np.abs(fast - naive).max()) / denom)
    passed = worst < 1e-5
    print(
        f"loss_equivalence over {args.pairs} pairs: max_rel_err={worst:.3g} "
        f"tol=1e-5 [{'PASS' if passed else 'FAIL'}]"
    )
    return passed


def _oracle_distill_toy(args) -> bool:
    res = distill_mod.toy_distillation_experiment(seed=args.seed or 0)
    ratio = res["student_var_err"] / res["teacher_var_err"]
    passed = res["student_var_err"] < res["teacher_var_err"]
    print(
        f"distill_toy: student_var_err={res['student_var_err']:.4f} "
        f"teacher_var_err={res['teacher_var_err']:.4f} ratio={ratio:.4f} "
        f"[{'PASS' if passed else 'FAIL'}]"
    )
    return passed


def cmd_oracle(args) -> int:
    _apply_determinism(args)
    runners = {
        "gaussian_flow": _oracle_gaussian_flow,
        "loss_equivalence": _oracle_loss_equivalence,
        "distill_toy": _oracle_distill_toy,
    }
    return 0 if runners[args.kind](args) else 1


# ---------------------------------------------------------------------------
# plot-spectrograms
# ---------------------------------------------------------------------------


def log_spectrogram_db(x: np.ndarray, n_fft: int = 1024, hop: int = 256) -> np.ndarray:
    """Log-magnitude STFT in dB, low frequencies at the bottom row."""
    xt = torch.from_numpy(np.asarray(x, dtype=np.float32))
    spec = torch.stft(
        xt.unsqueeze(0),
        n_fft=n_fft,
        hop_length=hop,
        window=torch.hann_window(n_fft),
        center=True,
        pad_mode="constant",
        return_complex=True,
    ).abs().squeeze(0)
    return np.flipud(20.0 * np.log10(spec.numpy() + 1e-6))


def spectrogram_image(grid_db: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    """Map a dB grid onto RGB bytes with a fixed color scale."""
    from matplotlib import colormaps

    norm = np.clip((grid_db - vmin) / max(vmax - vmin, 1e-9), 0.0, 1.0)
    rgba = colormaps["magma"](norm)
    return (rgba[..., :3] * 255).astype(np.uint8)


def cmd_plot_spectrograms(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import image as mpl_image

    grids = [log_spectrogram_db(read_wav(p).samples) for p in args.inputs]
    vmax = max(float(g.max()) for g in grids)
    vmin = vmax - 80.0
    panels = [spectrogram_image(g, vmin, vmax) for g in grids]
    height = max(p.shape[0] for p in panels)
    separator = np.full((height, 4, 3), 255, dtype=np.uint8)
    padded = []
    for p in panels:
        if p.shape[0] < height:
            p = np.vstack([np.zeros((height - p.shape[0], p.shape[1], 3), np.uint8), p])
        padded.append(p)
    strips: list[np.ndarray] = []
    for p in padded:
        if strips:
            strips.append(separator)
        strips.append(p)
    mpl_image.imsave(args.out, np.hstack(strips))
    print(args.out)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML config file")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. train.steps=500",
    )
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument(
        "--deterministic",
        action="store_true",
        help="single-threaded deterministic kernels (bit-reproducible, slower)",
    )

    parser = argparse.ArgumentParser(
        prog="flowvoc", description="Flow-matching neural vocoder toolkit"
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", parents=[common], help="flow-matching training")
    p.add_argument(
        "--resume", nargs="?", const=True, default=False, metavar="CKPT",
        help="resume from the latest (or a given) checkpoint",
    )
    p.add_argument("--keep", type=int, default=3, help="checkpoints retained")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("distill", parents=[common], help="consistency distillation")
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    p.add_argument("--keep", type=int, default=3)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("synth", parents=[common], help="mel-to-waveform synthesis")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--steps", type=int, default=6, help="ODE solver steps")
    p.add_argument("--out-dir", default=".")
    p.add_argument("inputs", nargs="+", help="WAV (copy synthesis) or log-mel .npy files")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", parents=[common], help="objective metric table")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--repeats", type=int, default=3, help="RTF timing repeats")
    p.add_argument("--gate-frac", type=float, default=1e-4, help="silence energy gate")
    p.add_argument(
        "--self-check", action="store_true",
        help="score references against themselves (identity laws)",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", parents=[common], help="self-contained analytic checks")
    p.add_argument(
        "--kind", required=True, choices=("gaussian_flow", "loss_equivalence", "distill_toy")
    )
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--pairs", type=int, default=20)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser(
        "plot-spectrograms", parents=[common], help="side-by-side spectrogram image"
    )
    p.add_argument("inputs", nargs="+", help="WAV files, one panel each")
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=cmd_plot_spectrograms)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (AudioError, ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
