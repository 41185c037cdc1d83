"""Ground-truth labels: majority vote, scratch bouts, duration filter, CV folds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TICK_RATE_HZ = 15.0


class Activity(IntEnum):
    STATIC = 0
    SCRATCH = 1
    MOTION = 2

    @classmethod
    def parse(cls, text: str) -> "Activity":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown activity label {text!r}") from None


@dataclass
class ActivityLabelSeries:
    labels: np.ndarray
    night_id: str = ""
    participant_id: str = ""
    tick_rate: float = TICK_RATE_HZ

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.ndim != 1 or self.labels.size == 0:
            raise ValueError("label series must be a non-empty 1-D array")
        if self.labels.min() < 0 or self.labels.max() > 2:
            raise ValueError("labels must be 0 (static), 1 (scratch) or 2 (motion)")

    def __len__(self) -> int:
        return self.labels.size

    @property
    def scratch_mask(self) -> np.ndarray:
        return self.labels == Activity.SCRATCH


@dataclass(frozen=True)
class Bout:
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class BoutList:
    bouts: list[Bout] = field(default_factory=list)

    def __post_init__(self):
        prev_end = -1
        for b in self.bouts:
            if b.start >= b.end:
                raise ValueError(f"empty or inverted bout [{b.start}, {b.end})")
            if b.start < prev_end:
                raise ValueError("bouts must be sorted and non-overlapping")
            prev_end = b.end

    def __len__(self) -> int:
        return len(self.bouts)

    def __iter__(self):
        return iter(self.bouts)

    def as_tuples(self) -> list[tuple[int, int]]:
        return [(b.start, b.end) for b in self.bouts]

    def total_ticks(self) -> int:
        return sum(b.length for b in self.bouts)

    def rasterize(self, n_ticks: int) -> np.ndarray:
        mask = np.zeros(n_ticks, dtype=bool)
        for b in self.bouts:
            mask[b.start:b.end] = True
        return mask


def _as_labels(series) -> np.ndarray:
    if isinstance(series, ActivityLabelSeries):
        return series.labels
    return np.asarray(series)


def majority_vote(labeler_series: Sequence[ActivityLabelSeries | np.ndarray]) -> ActivityLabelSeries:
    """Per-tick vote: Scratch on a strict majority, else Motion on a strict majority, else Static."""
    if len(labeler_series) == 0:
        raise ValueError("majority_vote needs at least one labeler")
    arrays = [_as_labels(s) for s in labeler_series]
    n = arrays[0].shape
    if any(a.shape != n for a in arrays):
        raise ValueError("all labeler series must have the same length")
    votes = np.stack(arrays)
    half = len(arrays) / 2.0
    scratch = (votes == Activity.SCRATCH).sum(axis=0) > half
    motion = (votes == Activity.MOTION).sum(axis=0) > half
    out = np.full(n, Activity.STATIC, dtype=np.int8)
    out[motion] = Activity.MOTION
    out[scratch] = Activity.SCRATCH
    first = labeler_series[0]
    if isinstance(first, ActivityLabelSeries):
        return ActivityLabelSeries(out, first.night_id, first.participant_id, first.tick_rate)
    return ActivityLabelSeries(out)


def mask_to_bouts(mask: np.ndarray) -> BoutList:
    """Maximal runs of True in a boolean mask as half-open intervals."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return BoutList()
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return BoutList([Bout(int(s), int(e)) for s, e in zip(edges[::2], edges[1::2])])


def extract_bouts(series: ActivityLabelSeries | np.ndarray) -> BoutList:
    labels = _as_labels(series)
    return mask_to_bouts(labels == Activity.SCRATCH)


def min_bout_ticks(min_duration_s: float, tick_rate: float = TICK_RATE_HZ) -> int:
    if min_duration_s < 0:
        raise ValueError("min_duration_s must be non-negative")
    # round first so 3 s x 15 Hz does not become 46 through float noise
    return int(math.ceil(round(min_duration_s * tick_rate, 9)))


def filter_bouts(bouts: BoutList, min_duration_s: float = 3.0, tick_rate: float = TICK_RATE_HZ) -> BoutList:
    """Keep bouts lasting at least ``min_duration_s`` (inclusive)."""
    threshold = min_bout_ticks(min_duration_s, tick_rate)
    return BoutList([b for b in bouts if b.length >= threshold])


def filter_mask(mask: np.ndarray, min_duration_s: float = 3.0, tick_rate: float = TICK_RATE_HZ) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    return filter_bouts(mask_to_bouts(mask), min_duration_s, tick_rate).rasterize(mask.size)


@dataclass(frozen=True)
class FoldAssignment:
    folds: dict[str, int]
    k: int = 4

    def __post_init__(self):
        if any(not 0 <= f < self.k for f in self.folds.values()):
            raise ValueError("fold index out of range")

    def test_participants(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.folds.items() if f == fold)

    def train_participants(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.folds.items() if f != fold)

    def fold_of(self, participant: str) -> int:
        return self.folds[participant]


def make_cv_folds(participant_ids: Iterable[str], k: int = 4, seed: int = 0) -> FoldAssignment:
    """Seeded shuffle then round-robin assignment of participants to k folds."""
    ids = sorted(set(str(p) for p in participant_ids))
    if k < 2:
        raise ValueError("need at least 2 folds")
    if len(ids) < k:
        raise ValueError(f"{len(ids)} participants cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    return FoldAssignment({ids[j]: int(i % k) for i, j in enumerate(order)}, k)


# ---------------------------------------------------------------------------
# label CSV: tick_index,label with label in {static, scratch, motion}
# ---------------------------------------------------------------------------

def write_label_csv(path: str | Path, series: ActivityLabelSeries | np.ndarray) -> None:
    labels = _as_labels(series)
    names = [a.name.lower() for a in Activity]
    with open(path, "w", newline="") as fh:
        fh.write("tick_index,label\n")
        fh.writelines(f"{i},{names[v]}\n" for i, v in enumerate(labels.tolist()))


def read_label_csv(path: str | Path, night_id: str = "", participant_id: str = "") -> ActivityLabelSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["tick_index", "label"]:
            raise ValueError(f"{path}: expected header tick_index,label")
        rows = [(int(r["tick_index"]), Activity.parse(r["label"])) for r in reader]
    if [i for i, _ in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: tick_index must run 0..n-1 without gaps")
    return ActivityLabelSeries(np.array([int(a) for _, a in rows], dtype=np.int8), night_id, participant_id)
