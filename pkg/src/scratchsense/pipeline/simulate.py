"""Cohort simulation: participants x nights -> traces, labels, hypnograms, manifest."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import dsp_frontend as dsp
from .. import sim_radar as sr
from ..labels_gt import TICK_RATE_HZ, Activity, majority_vote, read_label_csv, write_label_csv
from ..sleep_metrics import synth_hypnogram, write_hypnogram_csv
from ..stats_eval import sth
from . import container
from .config import PipelineConfig
from .manifest import file_entry, write_json

log = logging.getLogger(__name__)

DATASET_FORMAT = "scratchsense-dataset"


@dataclass(frozen=True)
class NightPlan:
    participant: str
    night_index: int
    night_id: str
    profile: sr.BehaviorProfile
    seeds: tuple[int, int, int, int, int]  # script, scene, noise, labelers, hypnogram


def participant_ids(n: int) -> list[str]:
    width = max(2, len(str(n)))
    return [f"P{i + 1:0{width}d}" for i in range(n)]


def plan_cohort(cfg: PipelineConfig) -> list[NightPlan]:
    """Per-participant severity and per-night jitter scale the gap between events."""
    c = cfg.cohort
    plans = []
    for p, pid in enumerate(participant_ids(c.participants)):
        rng = np.random.default_rng([cfg.seed, 101, p])
        severity = math.exp(rng.normal(0.0, c.severity_sigma))
        for n in range(c.nights_per_participant):
            night_factor = math.exp(rng.normal(0.0, c.night_sigma))
            profile = dataclasses.replace(cfg.behavior, mean_gap_s=cfg.behavior.mean_gap_s / (severity * night_factor))
            seeds = tuple(int(s) for s in np.random.SeedSequence([cfg.seed, p, n]).generate_state(5))
            plans.append(NightPlan(pid, n + 1, f"{pid}_N{n + 1}", profile, seeds))
    return plans


def labeler_view(truth: np.ndarray, rng: np.random.Generator, error_s: float,
                 tick_rate: float = TICK_RATE_HZ) -> np.ndarray:
    """One annotator's labels: every non-Static run has both edges jittered independently."""
    out = np.full_like(truth, int(Activity.STATIC))
    n = truth.size
    edges = np.flatnonzero(np.diff(truth)) + 1
    starts = np.r_[0, edges]
    ends = np.r_[edges, n]
    for s, e in zip(starts, ends):
        if truth[s] == Activity.STATIC:
            continue
        js, je = np.round(rng.normal(0.0, error_s * tick_rate, size=2)).astype(int)
        s2, e2 = max(0, s + js), min(n, e + je)
        if e2 > s2:
            out[s2:e2] = truth[s]
    return out


def simulate_night_files(cfg: PipelineConfig, plan: NightPlan, out_dir: Path) -> dict:
    c = cfg.cohort
    script_seed, scene_seed, noise_seed, label_seed, hyp_seed = plan.seeds
    script = sr.generate_activity_script(c.night_duration_s, plan.profile, script_seed, c.min_night_s)
    scene = sr.build_scene(script, plan.profile, scene_seed, cfg.layout)
    truth = script.labels()

    raw_rel = None
    if c.write_raw_cube:
        cube = np.concatenate([f for _, f in sr.iter_night(scene, cfg.radar, noise_seed)], axis=0)
        raw_rel = f"raw/{plan.night_id}.rfsc"
        (out_dir / "raw").mkdir(exist_ok=True)
        container.write(out_dir / raw_rel, container.TraceContainer(
            container.StreamTag.RAW_CUBE, TICK_RATE_HZ, cube.reshape(cube.shape[0], -1)))
        # the front-end consumes what was stored, not the in-memory cube
        stored = container.read(out_dir / raw_rel).data
        chunks = ((0, stored.reshape(cube.shape)),)
    else:
        chunks = sr.iter_night(scene, cfg.radar, noise_seed)
    trace, region = dsp.night_to_trace(chunks)

    trace_rel = f"traces/{plan.night_id}.rfsc"
    container.write(out_dir / trace_rel, container.TraceContainer(
        container.StreamTag.MOTION_TRACE, trace.tick_rate, trace.data))

    labeler_rels = []
    if c.labelers > 1:
        rng = np.random.default_rng(label_seed)
        views = [labeler_view(truth, rng, c.labeler_error_s) for _ in range(c.labelers)]
        for j, view in enumerate(views):
            rel = f"annotations/{plan.night_id}_L{j + 1}.csv"
            write_label_csv(out_dir / rel, view)
            labeler_rels.append(rel)
        labels = majority_vote(views).labels
    else:
        labels = truth
    label_rel = f"labels/{plan.night_id}.csv"
    write_label_csv(out_dir / label_rel, labels)

    hyp_rel = None
    if c.hypnograms:
        hyp = synth_hypnogram(labels == Activity.SCRATCH, cfg.sleep, hyp_seed)
        hyp_rel = f"hypnograms/{plan.night_id}.csv"
        write_hypnogram_csv(out_dir / hyp_rel, hyp)

    record = {
        "night_id": plan.night_id,
        "participant": plan.participant,
        "night_index": plan.night_index,
        "n_ticks": int(labels.size),
        "duration_s": float(c.night_duration_s),
        "trace": trace_rel,
        "labels": label_rel,
        "labeler_labels": labeler_rels,
        "hypnogram": hyp_rel,
        "raw_cube": raw_rel,
        "bed_cells": [list(cell) for cell in region.cells],
        "standardization": {
            "mean": [float(v) for v in trace.mean],
            "std": [float(v) for v in trace.std],
            "clamped": [bool(v) for v in trace.clamped],
        },
        "nrs": None,
    }
    return record


def _nrs_scores(cfg: PipelineConfig, records: list[dict], out_dir: Path) -> None:
    """Self-reported itch 0..10 rising with log true STH plus participant and night noise."""
    offsets: dict[str, float] = {}
    rng = np.random.default_rng([cfg.seed, 202])
    for rec in records:
        pid = rec["participant"]
        if pid not in offsets:
            offsets[pid] = float(rng.normal(0.0, 1.0))
        labels = read_label_csv(out_dir / rec["labels"]).labels
        true_sth = sth(labels, rec["duration_s"] / 3600.0)
        score = 2.0 + 1.5 * math.log1p(true_sth) + offsets[pid] + rng.normal(0.0, 0.7)
        rec["nrs"] = int(min(10, max(0, round(score))))


def cmd_simulate(cfg: PipelineConfig, out_dir: str | Path) -> Path:
    """Write a dataset directory and return the manifest path."""
    out_dir = Path(out_dir)
    try:
        subs = ("traces", "labels") + (("annotations",) if cfg.cohort.labelers > 1 else ()) \
            + (("hypnograms",) if cfg.cohort.hypnograms else ())
        for sub in subs:
            (out_dir / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror}") from None
    records = []
    for plan in plan_cohort(cfg):
        log.info("simulating %s", plan.night_id)
        records.append(simulate_night_files(cfg, plan, out_dir))
    if cfg.cohort.nrs:
        _nrs_scores(cfg, records, out_dir)
    files = {}
    for rec in records:
        for rel in [rec[k] for k in ("trace", "labels", "hypnogram", "raw_cube")] + rec["labeler_labels"]:
            if rel is not None:
                files[rel] = file_entry(out_dir / rel)
    manifest = {
        "format": DATASET_FORMAT,
        "version": 1,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "participants": participant_ids(cfg.cohort.participants),
        "nights": records,
        "files": dict(sorted(files.items())),
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path
