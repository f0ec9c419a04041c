"""
Module: sr_brcnn.config
Purpose: Configuration management for SR-BRCNN
Dependencies: pyyaml, pathlib
Reference: See docs/QUICK_START.md
"""

from pathlib import Path
from typing import Dict, Any, Optional, Tuple
import copy
import yaml

# Project root directory
PROJECT_ROOT = Path(__file__).parent.parent

# Directory paths
OUTPUTS_DIR = PROJECT_ROOT / "outputs"
CONFIG_DIR = PROJECT_ROOT / "config"

# Relation tags of the Chinese literature corpus, in the order the corpus lists them
RELATION_TAGS: Tuple[str, ...] = (
    "Located",
    "Near",
    "Part-Whole",
    "Family",
    "Social",
    "Create",
    "Use",
    "Ownership",
    "General-Special",
)

# Train/dev/test article counts of the released corpus
ARTICLE_SPLIT: Tuple[int, int, int] = (695, 58, 84)


class Config:
    """
    Configuration manager for SR-BRCNN.

    Holds model dimensions, training hyperparameters, structure-regularization
    defaults, data-split settings and output/logging options as plain dict
    sections. Every value can be overridden from a YAML file whose top-level
    keys match the section names.

    Attributes:
        model (Dict[str, Any]): Embedding/hidden dimensions, decode alpha, relation set
        training (Dict[str, Any]): AdaDelta, dropout, L2, epochs, batching, seed
        structreg (Dict[str, Any]): Default cut strategy and random cut ratio
        data (Dict[str, Any]): Article split ratios
        output (Dict[str, Any]): Where dated run directories are created
        logging (Dict[str, Any]): Log level and format

    Example:
        >>> config = Config()
        >>> config.model["word_dim"]
        200
        >>> config.training["keep_prob"]
        0.5
    """

    def __init__(self, config_file: Optional[Path] = None):
        """
        Initialize configuration with default values and optional overrides.

        Args:
            config_file: Optional path to YAML config file for overrides
        """
        self.model: Dict[str, Any] = {
            "relations": list(RELATION_TAGS),
            "word_dim": 200,
            "rel_dim": 50,
            "pos_dim": 0,  # 0 disables the POS feature channel
            "ner_dim": 0,  # 0 disables the entity-type feature channel
            "word_hidden": None,  # None = same as word_dim
            "rel_hidden": None,  # None = same as rel_dim
            "conv_dim": 200,
            "alpha": 0.5,
            "lowercase": True,
        }

        self.training: Dict[str, Any] = {
            "lambda": 1e-4,
            "keep_prob": 0.5,
            "rho": 0.95,
            "eps": 1e-6,
            "epochs": 50,
            "batch_size": 16,
            "seed": 13,
            "patience": 10,
            "init_scale": 0.08,
            "embedding_init_scale": 0.05,
        }

        self.structreg: Dict[str, Any] = {
            "strategy": "none",
            "cut_ratio": 0.15,
        }

        self.data: Dict[str, Any] = {
            "split": list(ARTICLE_SPLIT),
        }

        self.output: Dict[str, Any] = {
            "directory": str(OUTPUTS_DIR),
        }

        self.logging: Dict[str, Any] = {
            "level": "INFO",
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        }

        if config_file and Path(config_file).exists():
            self._load_overrides(Path(config_file))

    def _load_overrides(self, config_file: Path) -> None:
        """
        Load configuration overrides from YAML file.

        Args:
            config_file: Path to YAML configuration file
        """
        with open(config_file, 'r', encoding="utf-8") as f:
            overrides = yaml.safe_load(f)

        if overrides:
            # Deep merge overrides into existing config
            for key, value in overrides.items():
                if hasattr(self, key) and isinstance(getattr(self, key), dict):
                    getattr(self, key).update(value)
                else:
                    setattr(self, key, value)

    def section(self, name: str) -> Dict[str, Any]:
        """
        Get a copy of one configuration section.

        Args:
            name: Section name (model, training, structreg, data, output, logging)

        Returns:
            Independent copy of the section dictionary

        Raises:
            KeyError: If the section does not exist
        """
        value = getattr(self, name, None)
        if not isinstance(value, dict):
            raise KeyError(f"Unknown config section: {name}")
        return copy.deepcopy(value)

    def split_ratios(self) -> Tuple[float, float, float]:
        """Train/dev/test fractions derived from the article counts."""
        counts = [float(c) for c in self.data["split"]]
        total = sum(counts)
        if len(counts) != 3 or total <= 0 or min(counts) < 0:
            raise ValueError(f"data.split must be three non-negative counts, got {self.data['split']}")
        return counts[0] / total, counts[1] / total, counts[2] / total


# Global configuration instance
_config_instance: Optional[Config] = None


def get_config() -> Config:
    """
    Get global configuration instance (singleton pattern).

    Returns:
        Shared Config instance

    Example:
        >>> from sr_brcnn.config import get_config
        >>> config = get_config()
        >>> print(config.training["rho"])
    """
    global _config_instance
    if _config_instance is None:
        # Check for local config override
        local_config = CONFIG_DIR / "local.yaml"
        _config_instance = Config(local_config if local_config.exists() else None)
    return _config_instance


def set_config(config: Optional[Config]) -> None:
    """Replace the global configuration (None resets to lazy defaults)."""
    global _config_instance
    _config_instance = config
