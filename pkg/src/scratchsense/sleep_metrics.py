"""Hypnograms, sleep latency / WASO / efficiency, and scratching per sleep stage."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .labels_gt import TICK_RATE_HZ

log = logging.getLogger(__name__)

EPOCH_S = 30.0
EPOCH_MIN = EPOCH_S / 60.0


class Stage(IntEnum):
    WAKE = 0
    LIGHT = 1
    DEEP = 2
    REM = 3

    @classmethod
    def parse(cls, text: str) -> "Stage":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown sleep stage {text!r}") from None


@dataclass
class Hypnogram:
    stages: np.ndarray
    night_id: str = ""

    def __post_init__(self):
        self.stages = np.asarray(self.stages, dtype=np.int8)
        if self.stages.ndim != 1 or self.stages.size == 0:
            raise ValueError("hypnogram must be a non-empty 1-D sequence")
        if self.stages.min() < 0 or self.stages.max() > 3:
            raise ValueError("stages must be 0..3 (wake, light, deep, rem)")

    def __len__(self) -> int:
        return self.stages.size

    def onset_epoch(self) -> int | None:
        asleep = np.flatnonzero(self.stages != Stage.WAKE)
        return int(asleep[0]) if asleep.size else None


@dataclass(frozen=True)
class SleepSummary:
    time_in_bed_min: float
    sleep_time_min: float
    sleep_latency_min: float
    waso_min: float
    sleep_efficiency: float
    sleep_disturbance: float


def _hyp(hyp) -> Hypnogram:
    return hyp if isinstance(hyp, Hypnogram) else Hypnogram(hyp)


def sleep_latency(hyp: Hypnogram) -> float:
    """Minutes awake before the first non-Wake epoch (whole night if never asleep)."""
    hyp = _hyp(hyp)
    onset = hyp.onset_epoch()
    return EPOCH_MIN * (len(hyp) if onset is None else onset)


def waso(hyp: Hypnogram) -> float:
    """Minutes of Wake after sleep onset."""
    hyp = _hyp(hyp)
    onset = hyp.onset_epoch()
    if onset is None:
        return 0.0
    return EPOCH_MIN * int(np.count_nonzero(hyp.stages[onset + 1:] == Stage.WAKE))


def sleep_summary(hyp: Hypnogram) -> SleepSummary:
    hyp = _hyp(hyp)
    n = len(hyp)
    asleep = int(np.count_nonzero(hyp.stages != Stage.WAKE))
    # epoch counts keep the partition latency + waso + sleep = time in bed exact
    onset = hyp.onset_epoch()
    latency_epochs = n if onset is None else onset
    waso_epochs = 0 if onset is None else int(np.count_nonzero(hyp.stages[onset + 1:] == Stage.WAKE))
    efficiency = asleep / n
    return SleepSummary(
        time_in_bed_min=EPOCH_MIN * n,
        sleep_time_min=EPOCH_MIN * asleep,
        sleep_latency_min=EPOCH_MIN * latency_epochs,
        waso_min=EPOCH_MIN * waso_epochs,
        sleep_efficiency=efficiency,
        sleep_disturbance=1.0 - efficiency,
    )


def per_stage_scratch(hyp: Hypnogram, scratch, tick_rate: float = TICK_RATE_HZ) -> dict[Stage, float]:
    """Seconds of scratching inside each stage's epochs.

    ``scratch`` is a boolean mask or label series (1 = scratch) on the tick
    grid starting at epoch 0.  Only the overlapping span is counted.
    """
    hyp = _hyp(hyp)
    arr = np.asarray(getattr(scratch, "labels", scratch))
    mask = arr.astype(bool) if arr.dtype == bool else arr == 1
    ticks_per_epoch = int(round(EPOCH_S * tick_rate))
    hyp_ticks = len(hyp) * ticks_per_epoch
    span = min(mask.size, hyp_ticks)
    if span <= 0:
        raise ValueError("hypnogram and scratch series do not overlap")
    if mask.size != hyp_ticks:
        log.warning("tick span %d and hypnogram span %d differ; truncating to overlap", mask.size, hyp_ticks)
    epoch_of_tick = np.arange(span) // ticks_per_epoch
    stage_of_tick = hyp.stages[epoch_of_tick]
    counts = np.bincount(stage_of_tick[mask[:span]], minlength=4)
    return {s: counts[s] / tick_rate for s in Stage}


@dataclass(frozen=True)
class SleepCoupling:
    """Markov stage model; scratching density raises the chance of being awake.

    ``strength`` scales how strongly the scratch fraction in the surrounding
    ``window_epochs`` epochs pushes transitions toward Wake.  Before sleep
    onset ``night_weight`` times the whole night's scratch fraction is added
    (itch at bedtime delays sleep).  0 decouples.
    """

    strength: float = 0.0
    window_epochs: int = 2
    night_weight: float = 2.0
    onset_rate: float = 0.9
    onset_steps: int = 4
    wake_rate: float = 0.03
    wake_persistence: float = 0.4

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("coupling strength must be >= 0")
        if self.window_epochs < 0:
            raise ValueError("window_epochs must be >= 0")
        if self.night_weight < 0:
            raise ValueError("night_weight must be >= 0")
        if self.onset_steps < 1:
            raise ValueError("onset_steps must be >= 1")
        for name in ("onset_rate", "wake_rate", "wake_persistence"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


# transitions among sleeping stages (light, deep, rem), row-normalised
_SLEEP_TRANSITIONS = np.array([
    [0.90, 0.06, 0.04],
    [0.10, 0.90, 0.00],
    [0.10, 0.00, 0.90],
])


def scratch_density(scratch, n_epochs: int, window_epochs: int, tick_rate: float = TICK_RATE_HZ) -> np.ndarray:
    arr = np.asarray(getattr(scratch, "labels", scratch))
    mask = arr.astype(bool) if arr.dtype == bool else arr == 1
    per_epoch = int(round(EPOCH_S * tick_rate))
    padded = np.zeros(n_epochs * per_epoch, dtype=float)
    m = min(mask.size, padded.size)
    padded[:m] = mask[:m]
    frac = padded.reshape(n_epochs, per_epoch).mean(axis=1)
    if window_epochs == 0:
        return frac
    kernel = np.ones(2 * window_epochs + 1)
    num = np.convolve(frac, kernel, mode="same")
    den = np.convolve(np.ones(n_epochs), kernel, mode="same")
    return num / den


def synth_hypnogram(scratch, coupling: SleepCoupling, seed: int, n_epochs: int | None = None,
                    tick_rate: float = TICK_RATE_HZ) -> Hypnogram:
    """Seeded stage sequence starting awake.

    With d the windowed density (plus night_weight times the night's mean
    density until onset), the probability of staying awake and of waking up
    both move toward 1 by a factor exp(-strength * d).  Sleep onset takes
    onset_steps successful epochs, which narrows the latency spread.
    """
    arr = np.asarray(getattr(scratch, "labels", scratch))
    if n_epochs is None:
        n_epochs = max(1, int(np.ceil(arr.size / (EPOCH_S * tick_rate))))
    density = scratch_density(arr, n_epochs, coupling.window_epochs, tick_rate)
    night_density = coupling.night_weight * scratch_density(arr, n_epochs, 0, tick_rate).mean()
    rng = np.random.default_rng(seed)
    u = rng.random((n_epochs, 2))
    stages = np.empty(n_epochs, dtype=np.int8)
    state = int(Stage.WAKE)
    onset = False
    drowsy = 0
    for e in range(n_epochs):
        keep_awake = np.exp(-coupling.strength * (density[e] + (0.0 if onset else night_density)))
        if state == Stage.WAKE:
            leave = (coupling.onset_rate if not onset else 1.0 - coupling.wake_persistence) * keep_awake
            if u[e, 0] < leave:
                # first sleep needs onset_steps drowsy epochs
                drowsy += 1
                if onset or drowsy >= coupling.onset_steps:
                    state = int(Stage.LIGHT)
                    onset = True
        else:
            p_wake = 1.0 - (1.0 - coupling.wake_rate) * keep_awake
            if u[e, 0] < p_wake:
                state = int(Stage.WAKE)
            else:
                row = _SLEEP_TRANSITIONS[state - 1]
                state = 1 + int(np.searchsorted(np.cumsum(row), u[e, 1] * row.sum(), side="right"))
                state = min(state, 3)
        stages[e] = state
    return Hypnogram(stages)


def write_hypnogram_csv(path: str | Path, hyp: Hypnogram) -> None:
    names = [s.name.lower() for s in Stage]
    with open(path, "w", newline="") as fh:
        fh.write("epoch_index,stage\n")
        fh.writelines(f"{i},{names[s]}\n" for i, s in enumerate(hyp.stages.tolist()))


def read_hypnogram_csv(path: str | Path, night_id: str = "") -> Hypnogram:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["epoch_index", "stage"]:
            raise ValueError(f"{path}: expected header epoch_index,stage")
        rows = [(int(r["epoch_index"]), Stage.parse(r["stage"])) for r in reader]
    if [i for i, _ in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: epoch_index must run 0..n-1 without gaps")
    return Hypnogram(np.array([int(s) for _, s in rows], dtype=np.int8), night_id)
