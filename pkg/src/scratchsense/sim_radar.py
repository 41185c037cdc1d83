"""Synthetic FMCW radar nights of a sleeping subject with tick-level ground truth.

One chirp per frame, one frame per 15 Hz tick.  Sample (n, m) of a frame is

    sum_k a_k * exp(j*2*pi*f_b*n*T_s + j*4*pi*R_k/lambda + j*pi*m*sin(az_k))

with f_b = 2*B*R_k / (c*T_c), T_s = T_c / N and R_k = range_k + displacement_k(t).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .labels_gt import TICK_RATE_HZ, Activity

SPEED_OF_LIGHT = 299_792_458.0

DisplacementFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RadarParams:
    carrier_wavelength_m: float = 0.05
    bandwidth_hz: float = 1.5e9
    chirp_duration_s: float = 1e-4
    samples_per_chirp: int = 256
    antenna_count: int = 8
    frame_rate_hz: float = TICK_RATE_HZ
    snr_db: float | None = 20.0
    noise_reference_amplitude: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.carrier_wavelength_m > 0:
            problems.append("carrier_wavelength_m must be > 0")
        if not self.bandwidth_hz > 0:
            problems.append("bandwidth_hz must be > 0")
        if not self.chirp_duration_s > 0:
            problems.append("chirp_duration_s must be > 0")
        if self.samples_per_chirp < 2:
            problems.append("samples_per_chirp must be >= 2")
        if self.antenna_count < 1:
            problems.append("antenna_count must be >= 1")
        if not self.frame_rate_hz > 0:
            problems.append("frame_rate_hz must be > 0")
        if self.noise_reference_amplitude < 0:
            problems.append("noise_reference_amplitude must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def range_resolution_m(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)

    @property
    def max_range_m(self) -> float:
        """Unambiguous range for complex sampling at N samples per chirp."""
        return self.samples_per_chirp * self.range_resolution_m

    @property
    def sample_period_s(self) -> float:
        return self.chirp_duration_s / self.samples_per_chirp

    def beat_frequency(self, range_m):
        return 2.0 * self.bandwidth_hz * np.asarray(range_m) / (SPEED_OF_LIGHT * self.chirp_duration_s)

    def range_bin(self, range_m: float) -> int:
        """Fast-time DFT bin of a target at ``range_m``: f_b / (f_s / N) = 2*B*R/c."""
        return int(round(self.beat_frequency(range_m) * self.chirp_duration_s))

    def noise_sigma(self) -> float:
        """Complex per-sample noise std giving ``snr_db`` in the reference target's range bin."""
        if self.snr_db is None:
            return 0.0
        bin_power = self.noise_reference_amplitude ** 2 * self.samples_per_chirp
        return float(np.sqrt(bin_power / 10.0 ** (self.snr_db / 10.0)))


def _zero_displacement(t):
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass
class Scatterer:
    range_m: float
    azimuth_rad: float
    reflectivity: float = 1.0
    displacement_fn: DisplacementFn = _zero_displacement
    name: str = ""

    def __post_init__(self):
        if not self.range_m > 0:
            raise ValueError("scatterer range must be > 0")
        if not -np.pi / 2 < self.azimuth_rad < np.pi / 2:
            raise ValueError("scatterer azimuth must lie in (-pi/2, pi/2)")
        if self.reflectivity < 0:
            raise ValueError("reflectivity must be >= 0")

    def range_at(self, t) -> np.ndarray:
        d = np.asarray(self.displacement_fn(np.asarray(t, dtype=float)), dtype=float)
        if np.any(np.isnan(d)):
            raise ValueError(f"scatterer {self.name or '?'} has NaN displacement")
        if np.any(np.abs(d) >= self.range_m):
            raise ValueError(f"scatterer {self.name or '?'} displacement exceeds its range")
        return self.range_m + d


# ---------------------------------------------------------------------------
# activity scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BehaviorProfile:
    """Event statistics for one night; durations in seconds."""

    scratch_probability: float = 0.5
    mean_gap_s: float = 45.0
    bout_median_s: float = 5.0
    bout_sigma: float = 0.6
    motion_median_s: float = 3.0
    motion_sigma: float = 0.5
    transition_probability: float = 0.5
    transition_s: tuple[float, float] = (0.4, 1.0)
    scratch_period_s: float = 0.5
    scratch_period_jitter: float = 0.1
    scratch_amplitude_m: float = 0.015
    breathing_rate_bpm: float = 15.0
    breathing_amplitude_m: float = 0.006
    motion_amplitude_m: float = 0.03
    max_drift_m: float = 0.08

    def __post_init__(self):
        problems = []
        for name in ("scratch_probability", "transition_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must lie in [0, 1], got {v}")
        for name in ("mean_gap_s", "bout_median_s", "motion_median_s", "scratch_period_s",
                     "breathing_rate_bpm"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        for name in ("bout_sigma", "motion_sigma", "scratch_period_jitter", "scratch_amplitude_m",
                     "breathing_amplitude_m", "motion_amplitude_m", "max_drift_m"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        lo, hi = self.transition_s
        if not 0 < lo <= hi:
            problems.append("transition_s must satisfy 0 < low <= high")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    activity: Activity
    period_s: float = 0.0
    amplitude_m: float = 0.0


@dataclass(frozen=True)
class ActivityScript:
    night_duration_s: float
    segments: tuple[Segment, ...]
    tick_rate: float = TICK_RATE_HZ

    def __post_init__(self):
        n = self.n_ticks
        pos = 0
        for s in self.segments:
            if s.start != pos or s.end <= s.start:
                raise ValueError("segments must be sorted, non-empty and tile the night")
            if s.activity == Activity.SCRATCH and not s.period_s > 0:
                raise ValueError("scratch segments need period_s > 0")
            pos = s.end
        if pos != n:
            raise ValueError(f"segments cover {pos} ticks, night has {n}")

    @property
    def n_ticks(self) -> int:
        return int(round(self.night_duration_s * self.tick_rate))

    def labels(self) -> np.ndarray:
        out = np.empty(self.n_ticks, dtype=np.int8)
        for s in self.segments:
            out[s.start:s.end] = s.activity
        return out

    def of(self, activity: Activity) -> list[Segment]:
        return [s for s in self.segments if s.activity == activity]


MIN_NIGHT_S = 120.0


def generate_activity_script(night_duration_s: float, profile: BehaviorProfile, seed: int,
                             min_duration_s: float = MIN_NIGHT_S,
                             tick_rate: float = TICK_RATE_HZ) -> ActivityScript:
    """Alternate static gaps with scratch bouts or other movements.

    Scratch bouts are log-normal around ``profile.bout_median_s`` and may be
    flanked by short arm movements (labelled Motion), mirroring the
    reach-scratch-return pattern.
    """
    if not night_duration_s > 0:
        raise ValueError("night_duration_s must be > 0")
    if night_duration_s < min_duration_s:
        raise ValueError(f"night_duration_s must be >= {min_duration_s} s")
    rng = np.random.default_rng(seed)
    n = int(round(night_duration_s * tick_rate))
    events: list[Segment] = []
    pos = 0

    def ticks(seconds: float) -> int:
        return max(1, int(round(seconds * tick_rate)))

    def push(length: int, activity: Activity, **kw) -> None:
        nonlocal pos
        end = min(n, pos + length)
        if end > pos:
            events.append(Segment(pos, end, activity, **kw))
        pos = end

    while pos < n:
        push(ticks(rng.exponential(profile.mean_gap_s)), Activity.STATIC)
        if pos >= n:
            break
        if rng.random() < profile.scratch_probability:
            lead = rng.random() < profile.transition_probability
            trail = rng.random() < profile.transition_probability
            lead_s = rng.uniform(*profile.transition_s)
            trail_s = rng.uniform(*profile.transition_s)
            dur = rng.lognormal(np.log(profile.bout_median_s), profile.bout_sigma)
            period = profile.scratch_period_s * (1.0 + profile.scratch_period_jitter * rng.uniform(-1, 1))
            amp = profile.scratch_amplitude_m * rng.uniform(0.7, 1.3)
            if lead:
                push(ticks(lead_s), Activity.MOTION)
            push(ticks(dur), Activity.SCRATCH, period_s=period, amplitude_m=amp)
            if trail:
                push(ticks(trail_s), Activity.MOTION)
        else:
            dur = rng.lognormal(np.log(profile.motion_median_s), profile.motion_sigma)
            push(ticks(dur), Activity.MOTION, amplitude_m=profile.motion_amplitude_m * rng.uniform(0.5, 1.5))

    merged: list[Segment] = []
    for s in events:
        if merged and merged[-1].activity == s.activity == Activity.STATIC:
            merged[-1] = Segment(merged[-1].start, s.end, Activity.STATIC)
        elif merged and merged[-1].activity == s.activity == Activity.MOTION:
            prev = merged[-1]
            merged[-1] = Segment(prev.start, s.end, Activity.MOTION, amplitude_m=max(prev.amplitude_m, s.amplitude_m))
        else:
            merged.append(s)
    return ActivityScript(float(night_duration_s), tuple(merged), tick_rate)


# ---------------------------------------------------------------------------
# scene construction
# ---------------------------------------------------------------------------

@dataclass
class Scene:
    scatterers: list[Scatterer]
    script: ActivityScript
    subject_index: int = 0
    limb_index: int = 1

    @property
    def subject(self) -> Scatterer:
        return self.scatterers[self.subject_index]


@dataclass(frozen=True)
class SceneLayout:
    subject_range_m: tuple[float, float] = (1.5, 3.0)
    subject_azimuth_rad: tuple[float, float] = (-0.4, 0.4)
    limb_reflectivity: float = 0.5
    limb_offset_m: float = 0.05
    limb_azimuth_offset_rad: float = 0.06
    clutter_count: tuple[int, int] = (2, 5)
    clutter_range_m: tuple[float, float] = (0.8, 6.0)
    clutter_reflectivity: tuple[float, float] = (0.5, 3.0)
    clutter_clearance_m: float = 0.3


def _tick_interpolator(values: np.ndarray, tick_rate: float) -> DisplacementFn:
    grid = np.arange(values.size) / tick_rate

    def fn(t):
        return np.interp(np.asarray(t, dtype=float), grid, values)

    return fn


def _smooth_walk(rng: np.random.Generator, n: int, amplitude: float, tick_rate: float) -> np.ndarray:
    """Zero-start smoothed random excursion of roughly ``amplitude`` metres."""
    if n <= 1 or amplitude == 0:
        return np.zeros(n)
    steps = rng.standard_normal(n)
    walk = np.cumsum(steps)
    width = max(1, int(0.2 * tick_rate))
    kernel = np.hanning(2 * width + 1)
    kernel /= kernel.sum()
    walk = np.convolve(np.pad(walk, width, mode="edge"), kernel, mode="valid")
    walk -= walk[0]
    peak = np.max(np.abs(walk))
    return walk * (amplitude / peak) if peak > 0 else walk


def body_tracks(script: ActivityScript, profile: BehaviorProfile, seed: int) -> dict[str, np.ndarray]:
    """Per-tick radial displacement tracks (metres) for chest and limb."""
    rng = np.random.default_rng(seed)
    n, rate = script.n_ticks, script.tick_rate
    t = np.arange(n) / rate
    breath_hz = profile.breathing_rate_bpm / 60.0
    breathing = profile.breathing_amplitude_m * np.sin(2 * np.pi * breath_hz * t + rng.uniform(0, 2 * np.pi))
    body = np.zeros(n)
    limb = np.zeros(n)
    scratch = np.zeros(n)
    offset = 0.0
    limb_rest = 0.0
    for s in script.segments:
        length = s.end - s.start
        if s.activity == Activity.MOTION:
            amp = s.amplitude_m or profile.motion_amplitude_m
            excursion = _smooth_walk(rng, length, amp, rate)
            body[s.start:s.end] = offset + excursion
            limb[s.start:s.end] = limb_rest + 2.0 * _smooth_walk(rng, length, amp, rate)
            offset = float(np.clip(offset + excursion[-1], -profile.max_drift_m, profile.max_drift_m))
            limb_rest = float(np.clip(limb[s.end - 1], -profile.max_drift_m, profile.max_drift_m))
        else:
            body[s.start:s.end] = offset
            limb[s.start:s.end] = limb_rest
            if s.activity == Activity.SCRATCH:
                tt = np.arange(length) / rate
                ramp = np.minimum(1.0, np.minimum(tt + 1 / rate, tt[::-1] + 1 / rate) / 0.1)
                phase = rng.uniform(0, 2 * np.pi)
                scratch[s.start:s.end] = s.amplitude_m * ramp * np.sin(2 * np.pi * tt / s.period_s + phase)
    return {"chest": breathing + body, "limb": body + limb + scratch}


def build_scene(script: ActivityScript, profile: BehaviorProfile, seed: int,
                layout: SceneLayout = SceneLayout()) -> Scene:
    """Subject chest + scratching limb + 2-5 static bed clutter scatterers."""
    rng = np.random.default_rng([seed, 1])
    tracks = body_tracks(script, profile, seed)
    r0 = rng.uniform(*layout.subject_range_m)
    az0 = rng.uniform(*layout.subject_azimuth_rad)
    chest = Scatterer(r0, az0, 1.0, _tick_interpolator(tracks["chest"], script.tick_rate), "chest")
    d_az = layout.limb_azimuth_offset_rad
    limb = Scatterer(r0 + rng.uniform(-layout.limb_offset_m, layout.limb_offset_m),
                     float(np.clip(az0 + rng.uniform(-d_az, d_az), -1.4, 1.4)),
                     layout.limb_reflectivity,
                     _tick_interpolator(tracks["limb"], script.tick_rate), "limb")
    clutter = []
    for i in range(int(rng.integers(layout.clutter_count[0], layout.clutter_count[1] + 1))):
        while True:
            rc = rng.uniform(*layout.clutter_range_m)
            if abs(rc - r0) >= layout.clutter_clearance_m:
                break
        clutter.append(Scatterer(rc, rng.uniform(-1.2, 1.2), rng.uniform(*layout.clutter_reflectivity),
                                 name=f"clutter{i}"))
    return Scene([chest, limb] + clutter, script)


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

def _check_ranges(ranges: np.ndarray, params: RadarParams) -> None:
    if np.any(ranges >= params.max_range_m) or np.any(ranges <= 0):
        raise ValueError(f"scatterer outside unambiguous range (0, {params.max_range_m:.3f}) m")


def _frames(ranges: np.ndarray, azimuths: np.ndarray, amps: np.ndarray, params: RadarParams) -> np.ndarray:
    """Noise-free frames.  ranges: (F, K) metres -> (F, N, M) complex."""
    F, K = ranges.shape
    N, M = params.samples_per_chirp, params.antenna_count
    if K == 0:
        return np.zeros((F, N, M), dtype=complex)
    n = np.arange(N)
    fast = 2 * np.pi * params.beat_frequency(ranges)[:, :, None] * (n * params.sample_period_s)[None, None, :]
    carrier = 4 * np.pi * ranges / params.carrier_wavelength_m
    chirp = np.exp(1j * (fast + carrier[:, :, None]))            # (F, K, N)
    steer = amps[:, None] * np.exp(1j * np.pi * np.arange(M)[None, :] * np.sin(azimuths)[:, None])  # (K, M)
    return np.einsum("fkn,km->fnm", chirp, steer)


def simulate_frame(scatterers: list[Scatterer], t: float, params: RadarParams,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """One chirp, samples_per_chirp x antenna_count complex matrix.

    Noise is added only when ``rng`` is given and ``params.snr_db`` is set.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    ranges = np.array([[s.range_at(t) for s in scatterers]], dtype=float).reshape(1, len(scatterers))
    _check_ranges(ranges, params)
    az = np.array([s.azimuth_rad for s in scatterers], dtype=float)
    amps = np.array([s.reflectivity for s in scatterers], dtype=float)
    frame = _frames(ranges, az, amps, params)[0]
    sigma = params.noise_sigma()
    if rng is not None and sigma > 0:
        noise = rng.standard_normal(frame.shape + (2,)) * (sigma / np.sqrt(2))
        frame = frame + (noise[..., 0] + 1j * noise[..., 1])
    return frame


def iter_night(scene: Scene, params: RadarParams, seed: int, chunk_frames: int = 900
               ) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (first_frame_index, frames) chunks; concatenation equals simulate_night."""
    if abs(params.frame_rate_hz - scene.script.tick_rate) > 1e-12:
        raise ValueError("radar frame rate must equal the script tick rate")
    n = scene.script.n_ticks
    rng = np.random.default_rng(seed)
    sigma = params.noise_sigma()
    az = np.array([s.azimuth_rad for s in scene.scatterers], dtype=float)
    amps = np.array([s.reflectivity for s in scene.scatterers], dtype=float)
    for start in range(0, n, chunk_frames):
        stop = min(n, start + chunk_frames)
        t = np.arange(start, stop) / params.frame_rate_hz
        ranges = np.stack([s.range_at(t) for s in scene.scatterers], axis=1) if scene.scatterers \
            else np.zeros((stop - start, 0))
        _check_ranges(ranges, params)
        frames = _frames(ranges, az, amps, params)
        if sigma > 0:
            noise = rng.standard_normal(frames.shape + (2,)) * (sigma / np.sqrt(2))
            frames += noise[..., 0] + 1j * noise[..., 1]
        yield start, frames


def simulate_night(scene: Scene, params: RadarParams, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Full radar cube (frames, samples, antennas) and the per-tick label series."""
    cube = np.concatenate([f for _, f in iter_night(scene, params, seed)], axis=0)
    return cube, scene.script.labels()
