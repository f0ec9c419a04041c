"""
Module: tests.test_config
Purpose: Configuration defaults, YAML overrides, seeds and run directories
"""

import sys
from pathlib import Path

import pytest
import torch

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from sr_brcnn.config import ARTICLE_SPLIT, RELATION_TAGS, Config, get_config, set_config
from sr_brcnn.models.brcnn import ModelConfig
from sr_brcnn.utils.output_manager import OutputManager, create_run_output
from sr_brcnn.utils.runtime import SEED_OFFSETS, configure_runtime, derive_seed, get_runtime_info


def test_defaults():
    config = Config()
    assert config.model["relations"] == list(RELATION_TAGS)
    assert len(RELATION_TAGS) == 9
    assert (config.model["word_dim"], config.model["rel_dim"], config.model["conv_dim"]) == (200, 50, 200)
    assert config.training["lambda"] == 1e-4
    assert config.training["keep_prob"] == 0.5
    assert (config.training["rho"], config.training["eps"]) == (0.95, 1e-6)
    assert config.structreg == {"strategy": "none", "cut_ratio": 0.15}
    assert tuple(config.data["split"]) == ARTICLE_SPLIT == (695, 58, 84)


def test_yaml_overrides(tmp_path):
    path = tmp_path / "local.yaml"
    path.write_text("model:\n  word_dim: 16\ntraining:\n  epochs: 3\n  seed: 99\n")
    config = Config(path)

    assert config.model["word_dim"] == 16
    assert config.model["rel_dim"] == 50, "unmentioned keys keep their defaults"
    assert config.training["epochs"] == 3 and config.training["seed"] == 99
    assert ModelConfig.from_config(config).word_dim == 16


def test_missing_file_keeps_defaults(tmp_path):
    assert Config(tmp_path / "absent.yaml").model["word_dim"] == 200


def test_section_is_a_copy():
    config = Config()
    section = config.section("model")
    section["relations"].append("Extra")
    assert "Extra" not in config.model["relations"]
    with pytest.raises(KeyError):
        config.section("nope")


def test_split_ratios():
    config = Config()
    train, dev, test = config.split_ratios()
    assert train + dev + test == pytest.approx(1.0)
    assert dev == pytest.approx(58 / 837)

    config.data["split"] = [1, 1]
    with pytest.raises(ValueError):
        config.split_ratios()


def test_global_config_singleton():
    set_config(None)
    try:
        assert get_config() is get_config()
        custom = Config()
        set_config(custom)
        assert get_config() is custom
    finally:
        set_config(None)


# ---------------------------------------------------------------------------
# Seeds and runtime
# ---------------------------------------------------------------------------

def test_derive_seed_streams():
    assert derive_seed(13, "shuffle", 4) == derive_seed(13, "shuffle", 4)
    seeds = {derive_seed(13, stream) for stream in SEED_OFFSETS}
    assert len(seeds) == len(SEED_OFFSETS), "every stream gets its own seed"
    assert derive_seed(13, "dropout", 1, 0) != derive_seed(13, "dropout", 1, 1)
    assert 0 <= derive_seed(-5, "init") < 2 ** 63
    with pytest.raises(KeyError):
        derive_seed(13, "bogus")


def test_configure_runtime():
    configure_runtime()
    info = get_runtime_info()
    assert torch.get_default_dtype() == torch.float64
    assert info["default_dtype"] == "torch.float64"
    assert info["deterministic"] is True
    assert info["threads"] == 1


# ---------------------------------------------------------------------------
# Output directories
# ---------------------------------------------------------------------------

def test_output_manager_layout(tmp_path):
    output = OutputManager(base_dir=tmp_path / "runs", run_name=None)
    assert output.run_dir == tmp_path / "runs"
    assert output.checkpoints_dir.is_dir() and output.reports_dir.is_dir()
    assert output.get_output_path("best.ckpt") == output.checkpoints_dir / "best.ckpt"
    assert output.get_output_path("a.csv", subdir="reports") == output.reports_dir / "a.csv"
    assert output.get_output_path("train_log.csv", subdir="run") == output.run_dir / "train_log.csv"


def test_create_run_output(tmp_path):
    output = create_run_output("preposition", base_dir=tmp_path)
    assert output.run_dir.parent == tmp_path
    assert "preposition" in output.run_dir.name
    assert output.run_dir.is_dir()
