"""cmd_report: text summary and plot-ready CSVs from an evaluation JSON."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from .manifest import read_json

BLOCK_TITLES = {"all": "all events", "min3s": ">= 3 s events"}


def _fmt(v, digits: int = 4) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _rate(r: dict | None) -> str:
    if r is None:
        return "n/a"
    return f"{r['value']:.4f} [{r['ci_low']:.4f}, {r['ci_high']:.4f}]"


def _corr_line(name: str, res: dict | None) -> str:
    if res is None:
        return f"  {name}: absent"
    if res.get("status") != "ok":
        return f"  {name}: undefined ({res.get('reason', '')})"
    return (f"  {name}: r = {res['r']:.4f}, p = {res['p_value']:.3g}, slope = {res['slope']:.4g}, "
            f"dof = {res['dof']}, excluded = {res['n_excluded']}")


def summary_text(ev: dict) -> str:
    lines = ["Nocturnal scratching evaluation", ""]
    lines.append(f"nights evaluated: {len(ev['nights'])}; skipped: {len(ev['skipped_nights'])}")
    lines.append(f"threshold: {ev['threshold']}; minimum bout: {ev['min_bout_s']} s")
    if ev.get("injected_predictions"):
        lines.append("predictions were injected, not produced by fold models")
    for key, title in BLOCK_TITLES.items():
        b = ev["blocks"][key]
        c = b["confusion"]
        lines += ["", f"[{title}]",
                  f"  ROC AUC: {b['roc_auc']:.4f}   PR AUC: {b['pr_auc']:.4f}",
                  f"  sensitivity: {_rate(c['sensitivity'])}",
                  f"  specificity: {_rate(c['specificity'])}",
                  f"  precision:   {_rate(c['precision'])}",
                  f"  F1: {_fmt(c['f1'])}   TP {c['tp']}  FP {c['fp']}  TN {c['tn']}  FN {c['fn']}",
                  f"  best sensitivity at specificity >= 0.95: {b['sensitivity_at_specificity_0.95']:.4f}"]
    lines += ["", "[radio vs ground truth, repeated-measures correlation]"]
    for key in ("sth", "sbh", "sth_3s", "sbh_3s"):
        lines.append(_corr_line(key.upper().replace("_3S", " (>= 3 s)"), ev["rmcorr"].get(key)))
    lines += ["", "[per-participant Pearson r, STH]"]
    for pp in ev["per_participant"]:
        s = pp["sth"]
        lines.append(f"  {pp['participant']} ({pp['n_nights']} nights): "
                     + ("undefined" if s is None else f"r = {s['r']:.4f}, p = {s['p_value']:.3g}"))
    lines += ["", "[sleep, log-scale rmcorr of radio STH]"]
    if ev.get("sleep") is None:
        lines.append("  absent (no hypnograms)")
    else:
        for metric in ("disturbance", "latency", "waso"):
            lines.append(_corr_line(metric, ev["sleep"][metric]))
        for name, t in sorted(ev["stages"]["tests"].items()):
            lines.append(f"  {name}: " + (f"W+ = {t['statistic']:g}, p = {t['p_value']:.3g}"
                                           if t["status"] == "ok" else f"undefined ({t['reason']})"))
    lines += ["", "[itch NRS]"]
    if ev.get("nrs") is None:
        lines.append("  absent (no NRS scores)")
    else:
        lines.append(_corr_line("log STH vs NRS", ev["nrs"]["log_sth_vs_nrs"]))
        t = ev["nrs"]["high_vs_low_nrs"]
        lines.append("  high vs low NRS nights: " + (f"U = {t['statistic']:g}, p = {t['p_value']:.3g}"
                                                     if t["status"] == "ok" else f"undefined ({t['reason']})"))
    return "\n".join(lines) + "\n"


def report_files(ev: dict) -> dict[str, str]:
    """File name -> content for everything cmd_report writes."""
    nights = ev["nights"]
    files = {"summary.txt": summary_text(ev)}
    files["scatter_sth.csv"] = _csv_text(
        ["night_id", "participant", "sth_true", "sth_radio", "sth_true_3s", "sth_radio_3s"],
        [[n["night_id"], n["participant"], n["sth_true"], n["sth_pred"], n["sth_true_3s"], n["sth_pred_3s"]]
         for n in nights])
    files["scatter_sbh.csv"] = _csv_text(
        ["night_id", "participant", "sbh_true", "sbh_radio", "sbh_true_3s", "sbh_radio_3s"],
        [[n["night_id"], n["participant"], n["sbh_true"], n["sbh_pred"], n["sbh_true_3s"], n["sbh_pred_3s"]]
         for n in nights])
    sleep_rows = [n for n in nights if n["sleep"] is not None]
    if sleep_rows:
        files["scatter_sleep.csv"] = _csv_text(
            ["night_id", "participant", "sth_radio", "sleep_disturbance", "sleep_latency_min", "waso_min"],
            [[n["night_id"], n["participant"], n["sth_pred"], n["sleep"]["sleep_disturbance"],
              n["sleep"]["sleep_latency_min"], n["sleep"]["waso_min"]] for n in sleep_rows])
    nrs_rows = [n for n in nights if n["nrs"] is not None]
    if nrs_rows:
        files["scatter_nrs.csv"] = _csv_text(
            ["night_id", "participant", "nrs", "sth_radio"],
            [[n["night_id"], n["participant"], n["nrs"], n["sth_pred"]] for n in nrs_rows])
    for key in BLOCK_TITLES:
        b = ev["blocks"][key]
        files[f"roc_{key}.csv"] = _csv_text(["fpr", "tpr"], b["roc_curve"])
        files[f"pr_{key}.csv"] = _csv_text(["recall", "precision"], b["pr_curve"])
    return files


def cmd_report(evaluation_path: str | Path, out_dir: str | Path) -> list[Path]:
    ev = read_json(evaluation_path)
    if ev.get("format") != "scratchsense-evaluation":
        raise ValueError(f"{evaluation_path}: not an evaluation report")
    out = Path(out_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in sorted(report_files(ev).items()):
        (out / name).write_text(text)
        written.append(out / name)
    return written
