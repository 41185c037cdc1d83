"""PipelineConfig: a TOML file mapped onto the module dataclasses.

Schema (every key optional; omitted keys take the dataclass defaults):

    seed, output_dir
    [radar]     RadarParams fields
    [behavior]  BehaviorProfile fields
    [layout]    SceneLayout fields
    [cohort]    participants, nights_per_participant, night_duration_s, min_night_s,
                severity_sigma, night_sigma, labelers, labeler_error_s,
                hypnograms, nrs, write_raw_cube
    [sleep]     SleepCoupling fields
    [model]     ModelConfig fields
    [train]     TrainConfig fields plus folds
    [evaluate]  min_bout_s, threshold, filter_3s
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..net.model import ModelConfig
from ..net.train import TrainConfig
from ..sim_radar import BehaviorProfile, RadarParams, SceneLayout
from ..sleep_metrics import SleepCoupling


DEFAULT_COUPLING = 2.0


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class CohortSpec:
    participants: int = 12
    nights_per_participant: int = 4
    night_duration_s: float = 1800.0
    min_night_s: float = 120.0
    severity_sigma: float = 0.35
    night_sigma: float = 0.7
    labelers: int = 1
    labeler_error_s: float = 0.2
    hypnograms: bool = True
    nrs: bool = True
    write_raw_cube: bool = False

    def __post_init__(self):
        problems = []
        if self.participants < 1:
            problems.append("participants must be >= 1")
        if self.nights_per_participant < 1:
            problems.append("nights_per_participant must be >= 1")
        if not self.night_duration_s > 0:
            problems.append("night_duration_s must be > 0")
        if self.min_night_s < 0:
            problems.append("min_night_s must be >= 0")
        if self.severity_sigma < 0 or self.night_sigma < 0:
            problems.append("severity_sigma and night_sigma must be >= 0")
        if self.labelers < 1:
            problems.append("labelers must be >= 1")
        if self.labeler_error_s < 0:
            problems.append("labeler_error_s must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass(frozen=True)
class FoldSpec:
    folds: int = 4

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass(frozen=True)
class EvalSpec:
    min_bout_s: float = 3.0
    threshold: float = 0.5
    filter_3s: bool = True

    def __post_init__(self):
        if self.min_bout_s < 0:
            raise ValueError("min_bout_s must be >= 0")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    output_dir: str = "run"
    radar: RadarParams = field(default_factory=RadarParams)
    behavior: BehaviorProfile = field(default_factory=BehaviorProfile)
    layout: SceneLayout = field(default_factory=SceneLayout)
    cohort: CohortSpec = field(default_factory=CohortSpec)
    sleep: SleepCoupling = field(default_factory=lambda: SleepCoupling(strength=DEFAULT_COUPLING))
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    folds: FoldSpec = field(default_factory=FoldSpec)
    evaluate: EvalSpec = field(default_factory=EvalSpec)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return dataclasses.replace(self, seed=int(seed), train=dataclasses.replace(self.train, seed=int(seed)))

    def to_dict(self) -> dict:
        """Everything that shapes the outputs; output_dir is left out so runs can move."""
        out = {"seed": self.seed}
        for name in _SECTIONS:
            out[name] = _as_plain(getattr(self, name))
        out["train"]["folds"] = self.folds.folds
        return out


_SECTIONS = {
    "radar": RadarParams,
    "behavior": BehaviorProfile,
    "layout": SceneLayout,
    "cohort": CohortSpec,
    "sleep": SleepCoupling,
    "model": ModelConfig,
    "train": TrainConfig,
    "evaluate": EvalSpec,
}


def _as_plain(obj) -> dict:
    d = dataclasses.asdict(obj)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _coerce(section: str, cls, values: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"{section}.{key}: unknown field")
        default = getattr(cls(), key)
        if key == "snr_db":
            default = 0.0
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{section}.{key}: expected true/false, got {value!r}")
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
            value = float(value)
        elif isinstance(default, tuple) or key == "decoder_channels":
            if not isinstance(value, list):
                raise ConfigError(f"{section}.{key}: expected an array, got {value!r}")
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def config_from_dict(raw: dict) -> PipelineConfig:
    known = set(_SECTIONS) | {"seed", "output_dir"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown section or field")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
    out_dir = raw.get("output_dir", "run")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir: expected a non-empty string")
    parts = {}
    for name, cls in _SECTIONS.items():
        if not isinstance(raw.get(name, {}), dict):
            raise ConfigError(f"{name}: expected a table")
        values = dict(raw.get(name, {}))
        if name == "train":
            folds = values.pop("folds", 4)
            if isinstance(folds, bool) or not isinstance(folds, int):
                raise ConfigError(f"train.folds: expected an integer, got {folds!r}")
            try:
                parts["folds"] = FoldSpec(folds)
            except ValueError as exc:
                raise ConfigError(f"train.folds: {exc}") from None
            values.setdefault("seed", seed)
        if name == "sleep":
            values.setdefault("strength", DEFAULT_COUPLING)
        parts[name] = _coerce(name, cls, values)
    cfg = PipelineConfig(seed=seed, output_dir=out_dir, **parts)
    if abs(cfg.radar.frame_rate_hz - 15.0) > 1e-12:
        raise ConfigError("radar.frame_rate_hz: must equal the 15 Hz tick rate")
    if cfg.model.in_channels != 2 * 4:
        raise ConfigError("model.in_channels: must be 8 (Re/Im of the 4 bed cells)")
    if cfg.cohort.night_duration_s < cfg.cohort.min_night_s:
        raise ConfigError("cohort.night_duration_s: shorter than cohort.min_night_s")
    if cfg.cohort.participants < cfg.folds.folds:
        raise ConfigError(f"cohort.participants: need at least {cfg.folds.folds} for the folds")
    return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return config_from_dict({})
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)
