import numpy as np
import pytest

from scratchsense.net.model import ModelConfig
from scratchsense.pipeline.config import config_from_dict

TINY_CFG = ModelConfig(in_channels=2, feature_dim=4, kernel_width=3, window=60, lookahead=10,
                       encoder_channels=(2, 3, 4))


def small_config(output_dir, seed=3, **overrides):
    """4 participants x 2 nights x 3 min; trains in seconds."""
    raw = {
        "seed": seed,
        "output_dir": str(output_dir),
        "radar": {"samples_per_chirp": 64},
        "behavior": {"mean_gap_s": 30.0},
        "cohort": {"participants": 4, "nights_per_participant": 2, "night_duration_s": 180.0,
                   "labelers": 3},
        "model": {"feature_dim": 8, "encoder_channels": [4, 8, 16]},
        "train": {"batch_size": 4, "iterations": 20, "lr": 3e-3},
    }
    for section, values in overrides.items():
        if isinstance(values, dict):
            raw.setdefault(section, {}).update(values)
        else:
            raw[section] = values
    return config_from_dict(raw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg():
    return TINY_CFG
