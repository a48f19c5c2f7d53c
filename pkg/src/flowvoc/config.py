"""Run configuration: one tree bundling every tunable, resolved as
default < config file < command-line override.

The file format is YAML with one section per subsystem; overrides use
dotted paths (``train.steps=500``).  Unknown keys are errors, never
silently ignored, and the resolved tree is serialized next to every
checkpoint so a run can be replayed from its artifacts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .audio import MelConfig
from .distill import DistillConfig
from .flow import TrainConfig
from .losses import LossWeights, StftConfig
from .network import NetworkConfig


class ConfigError(ValueError):
    """Raised for unknown keys, malformed values, or unreadable files."""


@dataclass(frozen=True)
class RunConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    manifest: str = ""
    checkpoint_dir: str = "checkpoints"
    log_dir: str = "logs"
    seed: int = 0


_SECTIONS = {
    "mel": MelConfig,
    "network": NetworkConfig,
    "train": TrainConfig,
    "distill": DistillConfig,
    "stft": StftConfig,
    "weights": LossWeights,
}
_SCALARS = ("manifest", "checkpoint_dir", "log_dir", "seed")


def run_config_to_dict(cfg: RunConfig) -> dict:
    out = {name: dataclasses.asdict(getattr(cfg, name)) for name in _SECTIONS}
    for name in _SCALARS:
        out[name] = getattr(cfg, name)
    return out


def _coerce(cls, values: dict):
    """Build a config dataclass from plain YAML values (lists become tuples)."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    fixed = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return cls(**fixed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def run_config_from_dict(tree: dict) -> RunConfig:
    unknown = set(tree) - set(_SECTIONS) - set(_SCALARS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _coerce(cls, tree.get(name, {}) or {})
    for name in _SCALARS:
        if name in tree:
            kwargs[name] = tree[name]
    return RunConfig(**kwargs)


def save_run_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(run_config_to_dict(cfg), fh, sort_keys=True)


def load_run_config(path) -> RunConfig:
    tree = _read_tree(path)
    return run_config_from_dict(tree)


def _read_tree(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            tree = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if tree is None:
        return {}
    if not isinstance(tree, dict):
        raise ConfigError(f"config file {path} must hold a key-value tree")
    return tree


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply dotted KEY=VALUE strings onto a config dict (values are YAML)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, _, raw_value = item.partition("=")
        try:
            value = yaml.safe_load(raw_value)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw_value!r}: {exc}") from exc
        parts = key.strip().split(".")
        if len(parts) == 1 and parts[0] in _SCALARS:
            tree[parts[0]] = value
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            tree.setdefault(parts[0], {})[parts[1]] = value
        else:
            raise ConfigError(f"unknown override target {key!r}")
    return tree


def resolve_run_config(
    config_path=None, overrides: list[str] | None = None, seed: int | None = None
) -> RunConfig:
    """default < config file < --set overrides < --seed flag."""
    tree = run_config_to_dict(RunConfig())
    if config_path is not None:
        file_tree = _read_tree(config_path)
        unknown = set(file_tree) - set(_SECTIONS) - set(_SCALARS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for name, sub in file_tree.items():
            if name in _SECTIONS:
                if not isinstance(sub, dict):
                    raise ConfigError(f"section {name!r} must be a mapping")
                tree[name].update(sub)
            else:
                tree[name] = sub
    apply_overrides(tree, overrides or [])
    if seed is not None:
        tree["seed"] = seed
    return run_config_from_dict(tree)
