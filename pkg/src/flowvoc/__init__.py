"""Flow-matching neural vocoder: mel-conditioned prior, spectral losses,
asymmetric U-Net, ODE synthesis, consistency distillation, and evaluation."""

from .audio import (
    AudioClip,
    AudioError,
    MelConfig,
    MelSpectrogram,
    Segment,
    extract_mel,
    load_manifest,
    random_segment,
    read_wav,
    resample_clip,
    write_wav_pcm16,
)
from .config import RunConfig, load_run_config, resolve_run_config, save_run_config
from .distill import (
    DistillConfig,
    Distiller,
    ema_update,
    one_step_synthesize,
    sample_t_truncated,
    toy_distillation_experiment,
)
from .flow import (
    FlowState,
    TrainConfig,
    Trainer,
    analytic_gaussian_flow_check,
    integrate_analytic_flow,
    interpolate,
    make_training_batch,
    reconstruct_velocity,
    sample_euler,
)
from .losses import (
    LegacyStftConfig,
    LossReport,
    LossWeights,
    StftConfig,
    fm_loss,
    mel_l1,
    original_stft_loss,
    stft_loss,
    time_weight,
    total_loss,
)
from .metrics import MetricReport, external_metric_adapter, mcd_dtw, measure_rtf, mstft_metric
from .network import (
    CheckpointError,
    NetworkConfig,
    UNetVocoder,
    build_network,
    count_params,
    load_checkpoint,
    load_network,
    save_checkpoint,
    snake_beta,
    time_embedding,
)
from .prior import PriorSpec, build_prior, frame_sigma, sample_prior, sigma_to_samples

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "AudioError",
    "MelConfig",
    "MelSpectrogram",
    "Segment",
    "extract_mel",
    "load_manifest",
    "random_segment",
    "read_wav",
    "resample_clip",
    "write_wav_pcm16",
    "RunConfig",
    "load_run_config",
    "resolve_run_config",
    "save_run_config",
    "DistillConfig",
    "Distiller",
    "ema_update",
    "one_step_synthesize",
    "sample_t_truncated",
    "toy_distillation_experiment",
    "FlowState",
    "TrainConfig",
    "Trainer",
    "analytic_gaussian_flow_check",
    "integrate_analytic_flow",
    "interpolate",
    "make_training_batch",
    "reconstruct_velocity",
    "sample_euler",
    "LegacyStftConfig",
    "LossReport",
    "LossWeights",
    "StftConfig",
    "fm_loss",
    "mel_l1",
    "original_stft_loss",
    "stft_loss",
    "time_weight",
    "total_loss",
    "MetricReport",
    "external_metric_adapter",
    "mcd_dtw",
    "measure_rtf",
    "mstft_metric",
    "CheckpointError",
    "NetworkConfig",
    "UNetVocoder",
    "build_network",
    "count_params",
    "load_checkpoint",
    "load_network",
    "save_checkpoint",
    "snake_beta",
    "time_embedding",
    "PriorSpec",
    "build_prior",
    "frame_sigma",
    "sample_prior",
    "sigma_to_samples",
]
