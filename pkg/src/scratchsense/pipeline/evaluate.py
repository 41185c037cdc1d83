"""cmd_evaluate: cross-validated predictions and every evaluation statistic."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .. import stats_eval as se
from ..labels_gt import filter_mask
from ..net.train import predict_night
from ..sleep_metrics import Stage, per_stage_scratch, read_hypnogram_csv, sleep_summary
from .config import PipelineConfig
from .manifest import ManifestError, sha256_of, write_json
from .training import folds_for, load_fold_models, load_night

log = logging.getLogger(__name__)

EVAL_FORMAT = "scratchsense-evaluation"
CURVE_POINTS = 101


def filtered_scores(p: np.ndarray, threshold: float, min_bout_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Scores and decisions once predicted bouts shorter than ``min_bout_s`` are removed.

    Ticks inside a kept bout keep their probability; every other tick is
    pushed below the threshold (min(p, thr) / 2), so thresholding the new
    score at ``threshold`` reproduces the filtered decision.
    """
    keep = filter_mask(p >= threshold, min_bout_s)
    return np.where(keep, p, 0.5 * np.minimum(p, threshold)), keep


def _thin(curve: se.Curve) -> list[list[float]]:
    idx = np.unique(np.round(np.linspace(0, curve.x.size - 1, min(CURVE_POINTS, curve.x.size))).astype(int))
    return [[float(curve.x[i]), float(curve.y[i])] for i in idx]


def sensitivity_at_specificity(curve: se.Curve, min_specificity: float) -> float:
    ok = curve.x <= 1.0 - min_specificity + 1e-15
    return float(curve.y[ok].max())


def detection_block(scores: np.ndarray, decisions: np.ndarray, truth: np.ndarray) -> dict:
    roc = se.roc_points_and_auc(scores, truth)
    pr = se.pr_points_and_auc(scores, truth)
    conf = se.confusion_metrics(decisions, truth)
    return {
        "n_ticks": int(truth.size),
        "n_scratch_ticks": int(truth.sum()),
        "roc_auc": roc.auc,
        "pr_auc": pr.auc,
        "sensitivity_at_specificity_0.95": sensitivity_at_specificity(roc, 0.95),
        "confusion": conf.to_dict(),
        "roc_curve": _thin(roc),
        "pr_curve": _thin(pr),
    }


def _safe(fn, *args) -> dict:
    try:
        return fn(*args).__dict__ | {"status": "ok"}
    except (ValueError, se.DegenerateDesign) as exc:
        return {"status": "undefined", "reason": str(exc)}


def _pearson_dict(x, y) -> dict | None:
    res = se.pearson(x, y)
    return None if res is None else {"r": res[0], "p_value": res[1]}


def cmd_evaluate(cfg: PipelineConfig, manifest: dict, run_dir: str | Path,
                 predictions: dict[str, np.ndarray] | None = None) -> dict:
    """Evaluate every night with the fold model that never saw its participant.

    ``predictions`` (night_id -> per-tick scratch probability) bypasses the
    models, e.g. to inject ground truth.
    """
    run_dir = Path(run_dir)
    folds = folds_for(manifest, cfg)
    thr, min_s = cfg.evaluate.threshold, cfg.evaluate.min_bout_s
    models = None if predictions is not None else load_fold_models(run_dir, folds.k)
    fold_info = []
    if models is not None:
        for k, (_, fm) in enumerate(models):
            if fm["dataset_sha256"] != sha256_of(Path(manifest["_root"]) / "manifest.json"):
                raise ManifestError(f"fold {k}: checkpoint was trained on a different dataset")
            fold_info.append({"fold": k, "test_participants": fm["test_participants"],
                              "checkpoint_sha256": fm["files"][fm["checkpoint"]]["sha256"],
                              "complete": fm["complete"]})

    root = Path(manifest["_root"])
    all_p, all_t, f_s, f_d, f_t = [], [], [], [], []
    nights, skipped = [], []
    for rec in manifest["nights"]:
        data, labels = load_night(manifest, rec)
        truth = labels == 1
        if models is not None:
            if data.shape[0] < cfg.model.window:
                log.warning("%s: %d ticks is shorter than one window; skipped", rec["night_id"], data.shape[0])
                skipped.append(rec["night_id"])
                continue
            fold = folds.fold_of(rec["participant"])
            model, fm = models[fold]
            if rec["participant"] in fm["train_participants"]:
                raise ManifestError(f"fold {fold} was trained on {rec['participant']}")
            p, _ = predict_night(model, data)
        else:
            fold = folds.fold_of(rec["participant"])
            p = np.asarray(predictions[rec["night_id"]], dtype=float)
            if p.shape != truth.shape:
                raise ValueError(f"{rec['night_id']}: injected predictions have the wrong length")
        pred = p >= thr
        fs, fd = filtered_scores(p, thr, min_s)
        ft = filter_mask(truth, min_s)
        all_p.append(p)
        all_t.append(truth)
        f_s.append(fs)
        f_d.append(fd)
        f_t.append(ft)

        hours = rec["duration_s"] / 3600.0
        row = {
            "night_id": rec["night_id"], "participant": rec["participant"], "fold": fold,
            "hours_in_bed": hours,
            "sth_true": se.sth(truth, hours), "sth_pred": se.sth(pred, hours),
            "sbh_true": se.sbh(truth, hours), "sbh_pred": se.sbh(pred, hours),
            "sth_true_3s": se.sth(ft, hours), "sth_pred_3s": se.sth(fd, hours),
            "sbh_true_3s": se.sbh(ft, hours), "sbh_pred_3s": se.sbh(fd, hours),
            "nrs": rec.get("nrs"), "sleep": None, "stage_scratch_s": None,
        }
        if rec.get("hypnogram"):
            hyp = read_hypnogram_csv(root / rec["hypnogram"], rec["night_id"])
            row["sleep"] = sleep_summary(hyp).__dict__
            row["stage_scratch_s"] = {s.name.lower(): v for s, v in per_stage_scratch(hyp, pred).items()}
        nights.append(row)

    if not nights:
        raise ManifestError("no night could be evaluated")
    report = {
        "format": EVAL_FORMAT,
        "version": 1,
        "dataset_sha256": sha256_of(root / "manifest.json"),
        "threshold": thr,
        "min_bout_s": min_s,
        "injected_predictions": predictions is not None,
        "folds": fold_info,
        "skipped_nights": skipped,
        "blocks": {
            "all": detection_block(np.concatenate(all_p), np.concatenate(all_p) >= thr, np.concatenate(all_t)),
            "min3s": detection_block(np.concatenate(f_s), np.concatenate(f_d), np.concatenate(f_t)),
        },
        "nights": nights,
    }
    report.update(night_statistics(nights))
    write_json(run_dir / "evaluation.json", report)
    return report


def night_statistics(nights: list[dict]) -> dict:
    out: dict = {"rmcorr": {}, "per_participant": []}
    for key in ("sth", "sbh", "sth_3s", "sbh_3s"):
        base, suffix = (key.split("_") + [""])[:2]
        t = f"{base}_true" + (f"_{suffix}" if suffix else "")
        p = f"{base}_pred" + (f"_{suffix}" if suffix else "")
        out["rmcorr"][key] = _safe(se.rmcorr, [(n["participant"], n[t], n[p]) for n in nights])

    for pid in sorted({n["participant"] for n in nights}):
        rows = [n for n in nights if n["participant"] == pid]
        out["per_participant"].append({
            "participant": pid,
            "n_nights": len(rows),
            "sth": _pearson_dict([r["sth_true"] for r in rows], [r["sth_pred"] for r in rows]),
            "sbh": _pearson_dict([r["sbh_true"] for r in rows], [r["sbh_pred"] for r in rows]),
        })

    with_sleep = [n for n in nights if n["sleep"] is not None]
    out["sleep"] = None
    out["stages"] = None
    if with_sleep:
        out["sleep"] = {
            metric: _safe(se.log_scale_rmcorr,
                          [(n["participant"], n["sth_pred"], n["sleep"][field]) for n in with_sleep])
            for metric, field in (("disturbance", "sleep_disturbance"), ("latency", "sleep_latency_min"),
                                  ("waso", "waso_min"))
        }
        out["stages"] = stage_tests(with_sleep)

    with_nrs = [n for n in nights if n["nrs"] is not None]
    out["nrs"] = nrs_statistics(with_nrs) if with_nrs else None
    return out


def stage_tests(nights: list[dict]) -> dict:
    """Mean scratching seconds per night for each participant and stage; Wake vs each sleep stage."""
    stages = [s.name.lower() for s in Stage]
    per_participant = {}
    for pid in sorted({n["participant"] for n in nights}):
        rows = [n["stage_scratch_s"] for n in nights if n["participant"] == pid]
        per_participant[pid] = {s: float(np.mean([r[s] for r in rows])) for s in stages}
    tests = {}
    for s in stages[1:]:
        diffs = [v["wake"] - v[s] for v in per_participant.values()]
        try:
            res = se.wilcoxon_signed_rank(diffs, 0.0, "greater")
            tests[f"wake_vs_{s}"] = res.__dict__ | {"status": "ok"}
        except ValueError as exc:
            tests[f"wake_vs_{s}"] = {"status": "undefined", "reason": str(exc)}
    return {"per_participant": per_participant, "tests": tests}


def nrs_statistics(nights: list[dict]) -> dict:
    rows = [(n["participant"], n["sth_pred"], n["nrs"]) for n in nights]
    out = {"log_sth_vs_nrs": _safe(se.mixed_effect_nrs_corr, rows)}
    scores = np.array([n["nrs"] for n in nights], dtype=float)
    cut = float(np.median(scores))
    high = [n["sth_pred"] for n in nights if n["nrs"] > cut]
    low = [n["sth_pred"] for n in nights if n["nrs"] <= cut]
    if high and low:
        res = se.wilcoxon_rank_sum(high, low, "greater")
        out["high_vs_low_nrs"] = res.__dict__ | {"status": "ok", "nrs_cut": cut}
    else:
        out["high_vs_low_nrs"] = {"status": "undefined", "reason": "NRS does not split into two groups"}
    return out
