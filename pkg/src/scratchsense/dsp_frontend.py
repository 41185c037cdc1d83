"""Radar cube -> bed-region MotionTrace: range FFT, delay-and-sum, variance-based cell pick."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .labels_gt import TICK_RATE_HZ

log = logging.getLogger(__name__)

DEFAULT_ANGLES = 32
DEFAULT_CELLS = 4


class NoSubjectDetected(RuntimeError):
    """Every range/angle cell is static over the night."""


def sine_grid(count: int = DEFAULT_ANGLES) -> np.ndarray:
    """Steering grid uniform in sin(theta) over [-1, 1)."""
    if count < 1:
        raise ValueError("angle grid must not be empty")
    return -1.0 + 2.0 * np.arange(count) / count


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def range_transform(frame: np.ndarray, window: str = "hann") -> np.ndarray:
    """Windowed DFT along fast time (axis -2); accepts one frame or a stack of frames."""
    frame = np.asarray(frame)
    if frame.ndim < 2:
        raise ValueError("frame must be (samples, antennas) or (frames, samples, antennas)")
    n = frame.shape[-2]
    if n < 2:
        raise ValueError("need at least 2 fast-time samples")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame contains non-finite samples")
    if window == "hann":
        w = hann(n)
    elif window in ("rect", "none"):
        w = np.ones(n)
    else:
        raise ValueError(f"unknown window {window!r}")
    return np.fft.fft(frame * w[:, None], axis=-2)


def steering_matrix(antenna_count: int, grid: np.ndarray) -> np.ndarray:
    """(antennas, angles) delay-and-sum weights exp(-j*pi*m*sin(theta)) / M."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("angle grid must not be empty")
    if antenna_count < 1:
        raise ValueError("need at least one antenna")
    m = np.arange(antenna_count)[:, None]
    return np.exp(-1j * np.pi * m * grid[None, :]) / antenna_count


def beamform(range_profiles: np.ndarray, grid: np.ndarray | None = None) -> np.ndarray:
    """Delay-and-sum map (..., range_bins, angles) from (..., range_bins, antennas)."""
    range_profiles = np.asarray(range_profiles)
    if grid is None:
        grid = sine_grid()
    return range_profiles @ steering_matrix(range_profiles.shape[-1], grid)


@dataclass(frozen=True)
class BedRegion:
    cells: tuple[tuple[int, int], ...]
    variances: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.cells) < 1:
            raise ValueError("bed region needs at least one cell")

    @property
    def range_bins(self) -> list[int]:
        return [r for r, _ in self.cells]

    def dominant_range_bin(self) -> int:
        return self.cells[0][0]

    def validate(self, n_range: int, n_angle: int) -> None:
        for r, a in self.cells:
            if not (0 <= r < n_range and 0 <= a < n_angle):
                raise ValueError(f"cell ({r}, {a}) outside map of {n_range} x {n_angle}")


def _pick_cells(variance: np.ndarray, k: int) -> BedRegion:
    scale = float(np.max(variance)) if variance.size else 0.0
    if not scale > 0:
        raise NoSubjectDetected("no subject detected: every cell has zero temporal variance")
    n_r, n_a = variance.shape
    rr, aa = np.meshgrid(np.arange(n_r), np.arange(n_a), indexing="ij")
    order = np.lexsort((aa.ravel(), rr.ravel(), -variance.ravel()))[:k]
    cells = tuple((int(rr.ravel()[i]), int(aa.ravel()[i])) for i in order)
    return BedRegion(cells, tuple(float(variance.ravel()[i]) for i in order))


def _static_floor(variance: np.ndarray, power: np.ndarray) -> np.ndarray:
    # variance from rounding alone on a perfectly static night is ~1e-32 of the power
    return np.where(variance <= 1e-20 * np.max(power, initial=0.0), 0.0, variance)


def select_bed_region(night_maps: np.ndarray, k: int = DEFAULT_CELLS, tick_rate: float = TICK_RATE_HZ,
                      min_seconds: float = 30.0) -> BedRegion:
    """Top-k cells of a (frames, range_bins, angles) map stack by temporal variance.

    Ties go to the lower (range_bin, angle_index).
    """
    night_maps = np.asarray(night_maps)
    if night_maps.ndim != 3:
        raise ValueError("night_maps must be (frames, range_bins, angles)")
    if night_maps.shape[0] < min_seconds * tick_rate:
        raise ValueError(f"need at least {min_seconds:g} s of frames")
    mean = night_maps.mean(axis=0)
    variance = np.mean(np.abs(night_maps - mean) ** 2, axis=0)
    power = np.mean(np.abs(night_maps) ** 2, axis=0)
    return _pick_cells(_static_floor(variance, power), k)


def profile_covariance(range_profiles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-range-bin antenna covariance, mean and power from (frames, bins, antennas)."""
    mean = range_profiles.mean(axis=0)
    centred = range_profiles - mean
    cov = np.einsum("trm,trn->rmn", centred, centred.conj()) / range_profiles.shape[0]
    power = np.einsum("trm,trn->rmn", range_profiles, range_profiles.conj()) / range_profiles.shape[0]
    return cov, mean, power


def select_bed_region_from_profiles(range_profiles: np.ndarray, grid: np.ndarray | None = None,
                                    k: int = DEFAULT_CELLS, tick_rate: float = TICK_RATE_HZ,
                                    min_seconds: float = 30.0) -> BedRegion:
    """Same selection as :func:`select_bed_region` without materialising the maps.

    Beamforming is linear, so the variance of map cell (r, a) is w_a^H C_r w_a
    with C_r the antenna covariance of range bin r (map = profile @ w).
    """
    range_profiles = np.asarray(range_profiles)
    if range_profiles.shape[0] < min_seconds * tick_rate:
        raise ValueError(f"need at least {min_seconds:g} s of frames")
    if grid is None:
        grid = sine_grid()
    w = steering_matrix(range_profiles.shape[-1], grid)
    cov, _, power = profile_covariance(range_profiles)
    variance = np.einsum("ma,rmn,na->ra", w, cov, w.conj()).real
    cell_power = np.einsum("ma,rmn,na->ra", w, power, w.conj()).real
    return _pick_cells(_static_floor(np.maximum(variance, 0.0), cell_power), k)


@dataclass
class MotionTrace:
    """Standardised (ticks, channels) series; channels are (Re, Im) per bed cell."""

    data: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    clamped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    tick_rate: float = TICK_RATE_HZ

    def __post_init__(self):
        if self.clamped.size == 0:
            self.clamped = np.zeros(self.data.shape[1], dtype=bool)

    @property
    def n_ticks(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def degenerate(self) -> bool:
        return bool(np.any(self.clamped))


def standardize(raw: np.ndarray, tick_rate: float = TICK_RATE_HZ) -> MotionTrace:
    """Zero-mean, unit-variance per channel; zero-variance channels keep std 1 and are flagged."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("trace contains non-finite values")
    mean = raw.mean(axis=0)
    centred = raw - mean
    std = np.sqrt(np.mean(centred ** 2, axis=0))
    scale = np.maximum(np.abs(mean), 1.0)
    clamped = std <= 1e-12 * scale
    if np.any(clamped):
        log.warning("%d zero-variance channel(s); std clamped to 1", int(clamped.sum()))
    std = np.where(clamped, 1.0, std)
    return MotionTrace(centred / std, mean, std, clamped, tick_rate)


def cells_to_channels(cell_series: np.ndarray) -> np.ndarray:
    """(ticks, cells) complex -> (ticks, 2*cells) real as Re0, Im0, Re1, Im1, ..."""
    out = np.empty((cell_series.shape[0], 2 * cell_series.shape[1]))
    out[:, 0::2] = cell_series.real
    out[:, 1::2] = cell_series.imag
    return out


def extract_motion_trace(night_maps: np.ndarray, region: BedRegion, tick_rate: float = TICK_RATE_HZ) -> MotionTrace:
    night_maps = np.asarray(night_maps)
    region.validate(night_maps.shape[1], night_maps.shape[2])
    r = [c[0] for c in region.cells]
    a = [c[1] for c in region.cells]
    return standardize(cells_to_channels(night_maps[:, r, a]), tick_rate)


def extract_motion_trace_from_profiles(range_profiles: np.ndarray, region: BedRegion,
                                       grid: np.ndarray | None = None,
                                       tick_rate: float = TICK_RATE_HZ) -> MotionTrace:
    """Beamform only the selected cells; equal to extract_motion_trace on the full maps."""
    if grid is None:
        grid = sine_grid()
    region.validate(range_profiles.shape[1], len(grid))
    w = steering_matrix(range_profiles.shape[-1], grid)
    cells = np.stack([range_profiles[:, r, :] @ w[:, a] for r, a in region.cells], axis=1)
    return standardize(cells_to_channels(cells), tick_rate)


def night_to_trace(frame_chunks, grid: np.ndarray | None = None, k: int = DEFAULT_CELLS,
                   window: str = "hann", tick_rate: float = TICK_RATE_HZ,
                   max_range_bin: int | None = None) -> tuple[MotionTrace, BedRegion]:
    """Front-end for a streamed night: range FFT per chunk, then select and extract.

    ``frame_chunks`` yields (start, frames) as produced by sim_radar.iter_night.
    Range profiles are kept as complex64; ``max_range_bin`` can drop far bins.
    """
    profiles = []
    for _, frames in frame_chunks:
        prof = range_transform(frames, window)
        if max_range_bin is not None:
            prof = prof[:, :max_range_bin, :]
        profiles.append(prof.astype(np.complex64))
    stack = np.concatenate(profiles, axis=0).astype(np.complex128)
    region = select_bed_region_from_profiles(stack, grid, k, tick_rate)
    return extract_motion_trace_from_profiles(stack, region, grid, tick_rate), region
