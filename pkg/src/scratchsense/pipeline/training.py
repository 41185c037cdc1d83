"""cmd_train: participant-disjoint k-fold training with resumable checkpoints."""
from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import numpy as np

from ..labels_gt import FoldAssignment, make_cv_folds, read_label_csv
from ..net import checkpoint as ckpt_io
from ..net.model import ScratchNet
from ..net.train import TrainingDataError, TrainState, check_training_data, train
from . import container
from .config import PipelineConfig
from .manifest import ManifestError, file_entry, read_json, sha256_of, write_json

log = logging.getLogger(__name__)


def load_night(manifest: dict, rec: dict) -> tuple[np.ndarray, np.ndarray]:
    root = Path(manifest["_root"])
    trace = container.read(root / rec["trace"])
    if trace.tag != container.StreamTag.MOTION_TRACE:
        raise ManifestError(f"{rec['trace']}: expected a motion-trace stream")
    labels = read_label_csv(root / rec["labels"]).labels
    if labels.size != trace.n_ticks:
        raise ManifestError(f"{rec['night_id']}: {labels.size} labels for {trace.n_ticks} ticks")
    return trace.data, labels


def folds_for(manifest: dict, cfg: PipelineConfig) -> FoldAssignment:
    participants = manifest["participants"]
    if len(participants) < cfg.folds.folds:
        raise ManifestError(f"{len(participants)} participants cannot fill {cfg.folds.folds} folds")
    return make_cv_folds(participants, cfg.folds.folds, cfg.seed)


def training_windows(manifest: dict, participants: list[str], window: int) -> tuple[np.ndarray, np.ndarray]:
    """Consecutive full windows from every night of the given participants (tails dropped)."""
    keep = set(participants)
    xs, ys = [], []
    for rec in manifest["nights"]:
        if rec["participant"] not in keep:
            continue
        data, labels = load_night(manifest, rec)
        n = data.shape[0] // window
        if n == 0:
            log.warning("%s shorter than one window; skipped for training", rec["night_id"])
            continue
        xs.append(data[:n * window].reshape(n, window, -1).transpose(0, 2, 1))
        ys.append(labels[:n * window].reshape(n, window))
    if not xs:
        return np.zeros((0, 0, window), dtype=np.float32), np.zeros((0, window), dtype=np.int8)
    return np.concatenate(xs).astype(np.float32), np.concatenate(ys)


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, 303, fold]).generate_state(1)[0])


def fold_paths(model_dir: Path, fold: int) -> dict[str, Path]:
    return {
        "checkpoint": model_dir / f"fold{fold}.ckpt",
        "losses": model_dir / f"fold{fold}_loss.csv",
        "manifest": model_dir / f"fold{fold}.json",
    }


def cmd_train(cfg: PipelineConfig, manifest: dict, out_dir: str | Path, stop_after: int | None = None) -> list[Path]:
    """Train one model per fold; returns the training-manifest paths.

    An existing checkpoint for the same dataset and fold is resumed from its
    saved iteration.  ``stop_after`` halts every fold early (checkpoint kept)
    so an interrupted run can be reproduced.
    """
    model_dir = Path(out_dir) / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    folds = folds_for(manifest, cfg)
    dataset_sha = sha256_of(Path(manifest["_root"]) / "manifest.json")
    written = []
    for k in range(folds.k):
        paths = fold_paths(model_dir, k)
        train_ids = folds.train_participants(k)
        test_ids = folds.test_participants(k)
        x, y = training_windows(manifest, train_ids, cfg.model.window)
        try:
            check_training_data(x, y)
        except TrainingDataError as exc:
            raise TrainingDataError(f"fold {k}: {exc}") from None
        seed = fold_seed(cfg.seed, k)
        tcfg = dataclasses.replace(cfg.train, seed=seed)
        meta = {"fold": k, "dataset_sha256": dataset_sha, "train_participants": train_ids,
                "test_participants": test_ids, "train": dataclasses.asdict(tcfg)}
        state = _resume(paths, meta, tcfg.dtype)
        if state is None:
            model = ScratchNet.create(cfg.model, seed)
        else:
            model = state.model
            log.info("fold %d: resuming at iteration %d", k, state.iteration)
        target = tcfg.iterations if stop_after is None else min(stop_after, tcfg.iterations)
        run_cfg = dataclasses.replace(tcfg, iterations=target)
        if state is None or state.iteration < target:
            log.info("fold %d: %d windows from %d participants", k, len(x), len(train_ids))
            state = train(x, y, model, run_cfg, state)
        ckpt_io.save(paths["checkpoint"], ckpt_io.from_state(state, meta))
        ckpt_io.write_loss_csv(paths["losses"], state.losses)
        fold_manifest = dict(meta)
        fold_manifest.update({
            "iterations_done": state.iteration,
            "complete": state.iteration >= tcfg.iterations,
            "n_windows": int(len(x)),
            "checkpoint": paths["checkpoint"].name,
            "losses": paths["losses"].name,
            "files": {p.name: file_entry(p) for p in (paths["checkpoint"], paths["losses"])},
        })
        write_json(paths["manifest"], fold_manifest)
        written.append(paths["manifest"])
    return written


def _resume(paths: dict[str, Path], meta: dict, dtype: str) -> TrainState | None:
    if not paths["checkpoint"].exists():
        return None
    try:
        saved = ckpt_io.load(paths["checkpoint"])
    except ckpt_io.CheckpointError as exc:
        log.warning("ignoring unreadable checkpoint %s: %s", paths["checkpoint"], exc)
        return None
    same = {k: saved.meta.get(k) for k in ("fold", "dataset_sha256", "train_participants")} == \
           {k: meta[k] for k in ("fold", "dataset_sha256", "train_participants")}
    if not same or saved.meta.get("train", {}).get("seed") != meta["train"]["seed"]:
        log.warning("checkpoint %s belongs to a different run; starting fresh", paths["checkpoint"])
        return None
    losses = ckpt_io.read_loss_csv(paths["losses"]) if paths["losses"].exists() else []
    if len(losses) < saved.iteration:
        log.warning("loss history shorter than checkpoint iteration; starting fresh")
        return None
    return ckpt_io.to_state(saved, losses, np.dtype(dtype))


def load_fold_models(out_dir: str | Path, k: int) -> list[tuple[ScratchNet, dict]]:
    model_dir = Path(out_dir) / "models"
    out = []
    for fold in range(k):
        paths = fold_paths(model_dir, fold)
        if not paths["manifest"].exists() or not paths["checkpoint"].exists():
            raise ManifestError(f"missing checkpoint for fold {fold} in {model_dir}")
        fm = read_json(paths["manifest"])
        if sha256_of(paths["checkpoint"]) != fm["files"][paths["checkpoint"].name]["sha256"]:
            raise ManifestError(f"fold {fold}: checkpoint does not match its training manifest")
        saved = ckpt_io.load(paths["checkpoint"])
        dtype = np.dtype(fm["train"]["dtype"])
        model = ScratchNet(saved.model.cfg, {n: v.astype(dtype) for n, v in saved.model.params.items()})
        out.append((model, fm))
    return out
