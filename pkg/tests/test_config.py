"""Tests for run-configuration resolution: precedence, overrides, unknown-key
rejection, and file round trips."""

import pytest

from flowvoc.config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    load_run_config,
    resolve_run_config,
    run_config_from_dict,
    run_config_to_dict,
    save_run_config,
)


class TestDictRoundTrip:
    def test_defaults_round_trip(self):
        cfg = RunConfig()
        assert run_config_from_dict(run_config_to_dict(cfg)) == cfg

    def test_lists_coerced_to_tuples(self):
        tree = run_config_to_dict(RunConfig())
        tree["network"]["upsample_factors"] = [4, 4, 4, 4]
        tree["network"]["up_channels"] = [128, 64, 32, 16, 8]
        cfg = run_config_from_dict(tree)
        assert cfg.network.upsample_factors == (4, 4, 4, 4)
        assert cfg.network.total_upsample == 256

    def test_unknown_section_rejected(self):
        tree = run_config_to_dict(RunConfig())
        tree["optimizer"] = {"lr": 1.0}
        with pytest.raises(ConfigError, match="unknown config sections.*optimizer"):
            run_config_from_dict(tree)

    def test_unknown_field_rejected(self):
        tree = run_config_to_dict(RunConfig())
        tree["train"]["momentum"] = 0.9
        with pytest.raises(ConfigError, match="unknown TrainConfig keys.*momentum"):
            run_config_from_dict(tree)

    def test_invalid_value_wrapped(self):
        tree = run_config_to_dict(RunConfig())
        tree["train"]["lr_final"] = 1.0  # above lr_init
        with pytest.raises(ConfigError, match="invalid TrainConfig"):
            run_config_from_dict(tree)


class TestFileRoundTrip:
    def test_save_and_load(self, tmp_path):
        cfg = resolve_run_config(overrides=["train.steps=500", "mel.n_mels=80"])
        path = tmp_path / "run.yaml"
        save_run_config(cfg, path)
        assert load_run_config(path) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config file"):
            load_run_config(tmp_path / "absent.yaml")

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("train: [unclosed")
        with pytest.raises(ConfigError, match="malformed config file"):
            load_run_config(path)

    def test_non_mapping_file(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigError, match="key-value tree"):
            load_run_config(path)

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_run_config(path) == RunConfig()


class TestApplyOverrides:
    def test_section_and_scalar_targets(self):
        tree = {}
        apply_overrides(tree, ["train.batch=4", "seed=7"])
        assert tree == {"train": {"batch": 4}, "seed": 7}

    def test_values_parsed_as_yaml(self):
        tree = {}
        apply_overrides(
            tree,
            ["train.lr_init=2.5e-4", "network.upsample_factors=[4, 4, 4, 4]",
             "manifest=data/files.txt"],
        )
        assert tree["train"]["lr_init"] == 2.5e-4
        assert tree["network"]["upsample_factors"] == [4, 4, 4, 4]
        assert tree["manifest"] == "data/files.txt"

    def test_bad_shape_rejected(self):
        with pytest.raises(ConfigError, match="not KEY=VALUE"):
            apply_overrides({}, ["train.batch"])
        with pytest.raises(ConfigError, match="unknown override target"):
            apply_overrides({}, ["train.batch.size=4"])
        with pytest.raises(ConfigError, match="unknown override target"):
            apply_overrides({}, ["optimizer.lr=1"])


class TestResolvePrecedence:
    def test_file_overrides_default(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  steps: 123\n")
        cfg = resolve_run_config(config_path=path)
        assert cfg.train.steps == 123
        assert cfg.train.batch == 16  # untouched default

    def test_set_overrides_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  steps: 123\nseed: 5\n")
        cfg = resolve_run_config(config_path=path, overrides=["train.steps=456"])
        assert cfg.train.steps == 456
        assert cfg.seed == 5

    def test_seed_flag_wins_over_everything(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("seed: 5\n")
        cfg = resolve_run_config(config_path=path, overrides=["seed=6"], seed=7)
        assert cfg.seed == 7

    def test_file_with_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("vocoder:\n  size: big\n")
        with pytest.raises(ConfigError, match="unknown config sections"):
            resolve_run_config(config_path=path)

    def test_file_with_scalar_section_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("train: fast\n")
        with pytest.raises(ConfigError, match="must be a mapping"):
            resolve_run_config(config_path=path)
