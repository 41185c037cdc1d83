import dataclasses
import filecmp
import json
import struct

import numpy as np
import pytest

from scratchsense import cli
from scratchsense.labels_gt import read_label_csv
from scratchsense.pipeline import container
from scratchsense.pipeline.config import ConfigError, config_from_dict, load_config
from scratchsense.pipeline.evaluate import cmd_evaluate, filtered_scores
from scratchsense.pipeline.manifest import ManifestError, load_dataset_manifest, read_json
from scratchsense.pipeline.report import cmd_report, report_files
from scratchsense.pipeline.simulate import cmd_simulate
from scratchsense.pipeline.training import cmd_train, folds_for

from conftest import small_config


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = small_config(out)
    cmd_simulate(cfg, out / "dataset")
    manifest = load_dataset_manifest(out / "dataset")
    cmd_train(cfg, manifest, out)
    cmd_evaluate(cfg, manifest, out)
    cmd_report(out / "evaluation.json", out)
    return cfg, out


# -- config ------------------------------------------------------------------

def test_config_defaults_and_toml(tmp_path):
    cfg = config_from_dict({})
    assert cfg.cohort.participants == 12 and cfg.folds.folds == 4
    path = tmp_path / "c.toml"
    path.write_text('seed = 9\n[cohort]\nparticipants = 5\n[train]\nfolds = 5\nlr = 0.01\n')
    cfg = load_config(path)
    assert (cfg.seed, cfg.cohort.participants, cfg.folds.folds, cfg.train.lr, cfg.train.seed) == (9, 5, 5, 0.01, 9)


@pytest.mark.parametrize("raw, field", [
    ({"cohort": {"participants": "ten"}}, "cohort.participants"),
    ({"radar": {"bandwidth": 1.0}}, "radar.bandwidth"),
    ({"seed": -1}, "seed"),
    ({"train": {"folds": 1}}, "train.folds"),
    ({"model": {"in_channels": 4}}, "model.in_channels"),
    ({"cohort": {"participants": 3}}, "cohort.participants"),
    ({"sleep": {"strength": -2.0}}, "sleep"),
    ({"extra": 1}, "extra"),
    ({"cohort": {"night_duration_s": 60.0}}, "cohort.night_duration_s"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        config_from_dict(raw)


def test_bad_toml_is_config_error(tmp_path):
    (tmp_path / "bad.toml").write_text("seed = = 3\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


# -- container ---------------------------------------------------------------

def test_container_round_trip_is_bit_exact(tmp_path, rng):
    data = rng.standard_normal((37, 8)).astype(np.float32)
    container.write(tmp_path / "t.rfsc", container.TraceContainer(container.StreamTag.MOTION_TRACE, 15.0, data))
    back = container.read(tmp_path / "t.rfsc")
    assert back.tag == container.StreamTag.MOTION_TRACE and back.tick_rate == 15.0
    assert back.data.tobytes() == data.tobytes()


def test_container_layout(tmp_path):
    data = np.arange(6, dtype=np.float32).reshape(3, 2)
    raw = container.encode(container.TraceContainer(container.StreamTag.MOTION_TRACE, 15.0, data))
    magic, version, tag, rate, channels, ticks = struct.unpack_from("<4sHBdIQ", raw)
    assert (magic, tag, rate, channels, ticks) == (b"RFSC", 1, 15.0, 2, 3)
    head = struct.calcsize("<4sHBdIQ")
    assert raw[head:head + 24] == data.astype("<f4").tobytes()
    assert len(raw) == head + 24 + 4


def test_raw_cube_payload_doubles(tmp_path, rng):
    cube = (rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))).astype(np.complex64)
    raw = container.encode(container.TraceContainer(container.StreamTag.RAW_CUBE, 15.0, cube))
    assert len(raw) == struct.calcsize("<4sHBdIQ") + 5 * 4 * 4 * 2 + 4
    assert np.array_equal(container.decode(raw).data, cube)


def test_flipped_byte_fails_checksum(tmp_path, rng):
    data = rng.standard_normal((10, 8)).astype(np.float32)
    raw = bytearray(container.encode(container.TraceContainer(container.StreamTag.MOTION_TRACE, 15.0, data)))
    raw[40] ^= 0x01
    with pytest.raises(container.ContainerError, match="checksum"):
        container.decode(bytes(raw))


# -- simulate ----------------------------------------------------------------

def test_cohort_file_counts(tmp_path):
    cfg = small_config(tmp_path, cohort={"labelers": 1})
    cmd_simulate(cfg, tmp_path / "ds")
    assert len(list((tmp_path / "ds" / "traces").glob("*.rfsc"))) == 8
    assert len(list((tmp_path / "ds" / "labels").glob("*.csv"))) == 8
    assert len(list((tmp_path / "ds").glob("*.json"))) == 1
    m = load_dataset_manifest(tmp_path / "ds")
    assert len(m["nights"]) == 8 and len(m["participants"]) == 4


def test_simulation_is_byte_identical(tmp_path):
    cfg = small_config(tmp_path, cohort={"participants": 4, "nights_per_participant": 1})
    cmd_simulate(cfg, tmp_path / "a")
    cmd_simulate(cfg, tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    for sub in ["."] + list(cmp.common_dirs):
        left = sorted(p.name for p in (tmp_path / "a" / sub).iterdir() if p.is_file())
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a" / sub, tmp_path / "b" / sub, left, shallow=False)
        assert not mismatch and not errors
    other = small_config(tmp_path, seed=4, cohort={"participants": 4, "nights_per_participant": 1})
    cmd_simulate(other, tmp_path / "c")
    assert (tmp_path / "a" / "manifest.json").read_bytes() != (tmp_path / "c" / "manifest.json").read_bytes()


def test_raw_cube_streams(tmp_path):
    cfg = small_config(tmp_path, cohort={"participants": 4, "nights_per_participant": 1, "night_duration_s": 120.0,
                                          "write_raw_cube": True, "labelers": 1})
    cmd_simulate(cfg, tmp_path / "ds")
    m = load_dataset_manifest(tmp_path / "ds")
    raw = container.read(tmp_path / "ds" / m["nights"][0]["raw_cube"])
    assert raw.tag == container.StreamTag.RAW_CUBE
    assert raw.data.shape == (1800, 64 * 8)


def test_manifest_checksum_is_verified(tmp_path):
    cfg = small_config(tmp_path, cohort={"participants": 4, "nights_per_participant": 1, "labelers": 1})
    cmd_simulate(cfg, tmp_path / "ds")
    victim = tmp_path / "ds" / "labels" / "P01_N1.csv"
    victim.write_text(victim.read_text().replace("static", "motion", 1))
    with pytest.raises(ManifestError):
        load_dataset_manifest(tmp_path / "ds")


# -- train -------------------------------------------------------------------

def test_twenty_participants_split_fifteen_five():
    cfg = config_from_dict({"cohort": {"participants": 20}})
    folds = folds_for({"participants": [f"P{i:02d}" for i in range(1, 21)]}, cfg)
    for k in range(4):
        assert len(folds.train_participants(k)) == 15 and len(folds.test_participants(k)) == 5


def test_fold_manifests_are_disjoint(run_dir):
    cfg, out = run_dir
    for k in range(4):
        fm = read_json(out / "models" / f"fold{k}.json")
        assert fm["complete"] and fm["iterations_done"] == cfg.train.iterations
        assert not set(fm["train_participants"]) & set(fm["test_participants"])
        losses = (out / "models" / f"fold{k}_loss.csv").read_text().splitlines()
        assert losses[0] == "iteration,loss" and len(losses) == cfg.train.iterations + 1


def test_resume_reproduces_uninterrupted_run(run_dir, tmp_path):
    cfg, out = run_dir
    manifest = load_dataset_manifest(out / "dataset")
    cmd_train(cfg, manifest, tmp_path, stop_after=7)
    assert not read_json(tmp_path / "models" / "fold0.json")["complete"]
    cmd_train(cfg, manifest, tmp_path)
    for k in range(4):
        for name in (f"fold{k}.ckpt", f"fold{k}_loss.csv", f"fold{k}.json"):
            assert (tmp_path / "models" / name).read_bytes() == (out / "models" / name).read_bytes(), name


def test_scratch_free_fold_is_named(tmp_path):
    cfg = small_config(tmp_path, behavior={"scratch_probability": 0.0}, cohort={"nights_per_participant": 1,
                                                                                 "labelers": 1})
    cmd_simulate(cfg, tmp_path / "dataset")
    from scratchsense.net.train import TrainingDataError
    with pytest.raises(TrainingDataError, match="fold 0"):
        cmd_train(cfg, load_dataset_manifest(tmp_path / "dataset"), tmp_path)


# -- evaluate ----------------------------------------------------------------

def test_evaluation_blocks(run_dir):
    cfg, out = run_dir
    ev = read_json(out / "evaluation.json")
    assert set(ev["blocks"]) == {"all", "min3s"}
    assert len(ev["per_participant"]) == 4
    assert len(ev["nights"]) == 8
    for night in ev["nights"]:
        fold = night["fold"]
        assert night["participant"] in ev["folds"][fold]["test_participants"]
    assert ev["sleep"] is not None and ev["nrs"] is not None


def test_injected_truth_is_perfect(run_dir, tmp_path):
    cfg, out = run_dir
    manifest = load_dataset_manifest(out / "dataset")
    preds = {rec["night_id"]: (read_label_csv(out / "dataset" / rec["labels"]).labels == 1).astype(float)
             for rec in manifest["nights"]}
    ev = cmd_evaluate(cfg, manifest, tmp_path, predictions=preds)
    for block in ev["blocks"].values():
        assert block["roc_auc"] == 1.0
        assert block["confusion"]["sensitivity"]["value"] == 1.0
        assert block["confusion"]["specificity"]["value"] == 1.0
    assert ev["rmcorr"]["sth"]["r"] == pytest.approx(1.0)


def test_filtered_scores_reproduce_filtered_decisions(rng):
    p = rng.random(2000) ** 3
    p[100:160] = 0.9
    scores, keep = filtered_scores(p, 0.5, 3.0)
    assert np.array_equal(scores >= 0.5, keep)
    assert np.all(keep[100:160])


def test_missing_checkpoint(run_dir, tmp_path):
    cfg, out = run_dir
    manifest = load_dataset_manifest(out / "dataset")
    (tmp_path / "models").mkdir()
    for name in ("fold0.ckpt", "fold0.json", "fold1.ckpt", "fold1.json", "fold2.ckpt", "fold2.json"):
        (tmp_path / "models" / name).write_bytes((out / "models" / name).read_bytes())
    with pytest.raises(ManifestError, match="fold 3"):
        cmd_evaluate(cfg, manifest, tmp_path)


def test_nights_shorter_than_a_window_are_skipped(run_dir, tmp_path):
    cfg, out = run_dir
    manifest = load_dataset_manifest(out / "dataset")
    (tmp_path / "models").mkdir()
    for path in (out / "models").iterdir():
        (tmp_path / "models" / path.name).write_bytes(path.read_bytes())
    long_window = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, window=10 ** 6))
    with pytest.raises(ManifestError, match="no night"):
        cmd_evaluate(long_window, manifest, tmp_path)


# -- report ------------------------------------------------------------------

def test_report_round_trip_and_rows(run_dir, tmp_path):
    cfg, out = run_dir
    ev = read_json(out / "evaluation.json")
    cmd_report(out / "evaluation.json", tmp_path)
    for path in (out / "report").iterdir():
        assert (tmp_path / "report" / path.name).read_bytes() == path.read_bytes()
    for name in ("scatter_sth.csv", "scatter_sbh.csv", "scatter_sleep.csv", "scatter_nrs.csv"):
        rows = (out / "report" / name).read_text().splitlines()
        assert len(rows) - 1 == len(ev["nights"]) == 8


def test_report_notes_absent_sections(run_dir):
    _, out = run_dir
    ev = read_json(out / "evaluation.json")
    ev["sleep"] = None
    ev["nrs"] = None
    for n in ev["nights"]:
        n["sleep"] = None
        n["nrs"] = None
    files = report_files(ev)
    assert "scatter_sleep.csv" not in files and "scatter_nrs.csv" not in files
    assert "absent (no hypnograms)" in files["summary.txt"]
    assert "absent (no NRS scores)" in files["summary.txt"]


# -- CLI ---------------------------------------------------------------------

def _toml(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text)
    return str(path)


SMALL_TOML = """seed = 3
[radar]
samples_per_chirp = 64
[behavior]
mean_gap_s = 30.0
[cohort]
participants = 4
nights_per_participant = 1
night_duration_s = 180.0
[model]
feature_dim = 8
encoder_channels = [4, 8, 16]
[train]
batch_size = 4
iterations = 5
"""


def test_cli_exit_codes(tmp_path, capsys):
    good = _toml(tmp_path, SMALL_TOML)
    assert cli.main(["run", "--config", good, "--output", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "report" / "summary.txt").exists()
    bad = tmp_path / "bad.toml"
    bad.write_text("[cohort]\nparticipants = 'x'\n")
    assert cli.main(["simulate", "--config", str(bad), "--output", str(tmp_path / "o2")]) == 1
    assert "cohort.participants" in capsys.readouterr().err
    # a missing dataset manifest is invalid input; an unwritable output is a runtime failure
    assert cli.main(["evaluate", "--config", good, "--output", str(tmp_path / "nothing")]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--config", good, "--output", str(blocker / "sub")]) == 2


def test_cli_seed_override(tmp_path):
    good = _toml(tmp_path, SMALL_TOML)
    assert cli.main(["simulate", "--config", good, "--seed", "11", "--output", str(tmp_path / "o")]) == 0
    m = json.loads((tmp_path / "o" / "dataset" / "manifest.json").read_text())
    assert m["seed"] == 11 and m["config"]["train"]["seed"] == 11


@pytest.mark.slow
def test_cli_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and all(line.startswith("PASS") for line in lines)
