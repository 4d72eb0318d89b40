"""Command-line pipeline: stage chaining, stamps, exit codes, reports."""

import json
import subprocess
import sys

import pytest

from agisense import DiurnalProfile, TriggerRule, generate_deployment
from agisense.cli import main

TINY_PROTOCOL = {
    "permutation_repeats": 2,
    "importance_per_feature": False,
    "gbt": {"n_trees": 25, "max_depth": 2},
    "lstm": {"hidden_size": 8, "max_epochs": 6, "patience": 2, "batch_size": 8},
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full generate->...->report chain in a shared directory."""
    root = tmp_path_factory.mktemp("cli")
    out = root / "runs"
    config = {
        "seed": 9,
        "out_dir": str(out),
        "protocol": TINY_PROTOCOL,
        "generator": {
            "id": "g1",
            "duration_days": 3,
            "n_nodes": 1,
            "rules": [
                {"kind": "noise_spike", "rate_per_week": 14.0, "min_separation_min": 45.0}
            ],
        },
        "deployments": {"g1": str(out / "g1" / "manifest.json")},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))

    base = ["--config", str(config_path)]
    for command in ("generate", "ingest", "features", "train", "evaluate", "importance"):
        rc = main([command, *base])
        assert rc == 0, command
    assert main(["report", *base]) == 0
    return {"root": root, "out": out, "config": config_path, "base": base}


def test_generate_stage_outputs(pipeline):
    dep_dir = pipeline["out"] / "g1"
    for name in ("manifest.json", "sensors.csv", "labels.csv", "track.csv",
                 "ground_truth.json", "generate_meta.json"):
        assert (dep_dir / name).exists(), name
    meta = json.loads((dep_dir / "generate_meta.json").read_text())
    assert meta["schema"] == "agisense/1"
    assert meta["seed"] == 9
    assert len(meta["config_hash"]) == 16


def test_ingest_stage_outputs(pipeline):
    dep_dir = pipeline["out"] / "g1"
    assert (dep_dir / "canonical" / "manifest.json").exists()
    quality = json.loads((dep_dir / "quality.json").read_text())
    assert quality["deployment_id"] == "g1"
    assert quality["n_labels"] == 6
    for stats in quality["channels"].values():
        assert stats["missing"] == 0


def test_features_stage_outputs(pipeline):
    dep_dir = pipeline["out"] / "g1"
    meta = json.loads((dep_dir / "features_meta.json").read_text())
    assert meta["n_observations"] == 4 * meta["n_positive"]
    header = (dep_dir / "features.csv").read_text().splitlines()[0]
    assert header.count(",") >= 315  # 315 features plus bookkeeping columns


def test_train_stage_outputs(pipeline):
    dep_dir = pipeline["out"] / "g1"
    bundle = json.loads((dep_dir / "model_gbt.json").read_text())
    assert bundle["n_features"] == 315
    log = json.loads((dep_dir / "train_log_gbt.json").read_text())
    assert log["stopping_point"] >= 1
    assert len(log["fold_stops"]) == 5


def test_evaluate_stage_outputs_and_stamp_consistency(pipeline):
    dep_dir = pipeline["out"] / "g1"
    metrics = json.loads((dep_dir / "metrics_gbt.json").read_text())
    assert 0.0 <= metrics["metrics"]["weighted_f1"] <= 1.0
    md = (dep_dir / "metrics_gbt.md").read_text()
    assert "| weighted F1 |" in md

    stamps = [
        json.loads((dep_dir / name).read_text())
        for name in ("generate_meta.json", "quality.json", "features_meta.json",
                     "train_log_gbt.json", "metrics_gbt.json", "importance_gbt.json")
    ]
    hashes = {s["config_hash"] for s in stamps}
    seeds = {s["seed"] for s in stamps}
    assert len(hashes) == 1 and seeds == {9}


def test_importance_stage_outputs(pipeline):
    doc = json.loads((pipeline["out"] / "g1" / "importance_gbt.json").read_text())
    imp = doc["importance"]
    assert set(imp["permutation"]["by_channel"]) == {
        "light", "temperature", "humidity", "pressure", "acoustic"
    }
    assert imp["gain"] is not None and imp["weight"] is not None


def test_report_stage_outputs(pipeline):
    report = json.loads((pipeline["out"] / "report.json").read_text())
    assert set(report["results"]) == {"gbt:g1", "lstm:g1"}
    md = (pipeline["out"] / "report.md").read_text()
    assert "| model | g1 | mean individual | delta |" in md


def test_rerunning_evaluate_is_byte_identical(pipeline):
    target = pipeline["out"] / "g1" / "metrics_gbt.json"
    before = target.read_bytes()
    assert main(["evaluate", *pipeline["base"]]) == 0
    assert target.read_bytes() == before


def test_seed_and_out_overrides(pipeline):
    alt_out = pipeline["root"] / "alt"
    original = (pipeline["out"] / "g1" / "metrics_gbt.json").read_bytes()
    rc = main([
        "evaluate", *pipeline["base"], "--seed", "10", "--out", str(alt_out),
    ])
    assert rc == 0
    moved = json.loads((alt_out / "g1" / "metrics_gbt.json").read_text())
    assert moved["seed"] == 10
    # the original run directory is untouched by the redirected run
    assert (pipeline["out"] / "g1" / "metrics_gbt.json").read_bytes() == original


def test_unknown_model_kind_exits_2(pipeline):
    with pytest.raises(SystemExit) as exc:
        main(["train", *pipeline["base"], "--model", "forest"])
    assert exc.value.code == 2


def test_missing_config_flag_exits_2(capsys):
    assert main(["evaluate"]) == 2
    assert "missing required flag --config" in capsys.readouterr().err


def test_config_file_not_found_exits_2(tmp_path, capsys):
    assert main(["evaluate", "--config", str(tmp_path / "nope.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_json_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{]")
    assert main(["evaluate", "--config", str(bad)]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_unknown_config_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "seed": 1, "out_dir": str(tmp_path / "o"), "protocol": {"fods": 5}
    }))
    assert main(["evaluate", "--config", str(cfg)]) == 2
    assert "unknown config key protocol.fods" in capsys.readouterr().err


def test_missing_out_dir_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1}))
    assert main(["generate", "--config", str(cfg)]) == 2
    assert "out_dir" in capsys.readouterr().err


def test_unknown_deployment_id_exits_2(pipeline, capsys):
    rc = main(["evaluate", *pipeline["base"], "--deployment", "nope"])
    assert rc == 2
    assert "unknown deployment id 'nope'" in capsys.readouterr().err


def test_pipeline_error_is_stage_tagged(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "seed": 1,
        "out_dir": str(tmp_path / "o"),
        "deployments": {"d": str(tmp_path / "missing" / "manifest.json")},
    }))
    assert main(["ingest", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ingest:")


def test_ambiguous_dataset_selection_exits_2(tmp_path, pipeline, capsys):
    manifest = pipeline["out"] / "g1" / "manifest.json"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "seed": 1,
        "out_dir": str(tmp_path / "o"),
        "protocol": TINY_PROTOCOL,
        "deployments": {"a": str(manifest), "b": str(manifest)},
    }))
    assert main(["evaluate", "--config", str(cfg)]) == 2
    assert "exactly one deployment" in capsys.readouterr().err


def test_report_grid_spans_deployments_and_combined(tmp_path):
    out = tmp_path / "runs"
    rule = TriggerRule("noise_spike", rate_per_week=14.0, min_separation_min=45.0)
    manifests = {}
    for i, dep_id in enumerate(("d1", "d2", "d3")):
        paths = generate_deployment(
            DiurnalProfile(), [rule], 3, 1, seed=41 + i,
            out_dir=tmp_path / dep_id, dep_id=dep_id,
        )
        manifests[dep_id] = str(paths["manifest"])
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "seed": 5, "out_dir": str(out), "protocol": TINY_PROTOCOL,
        "deployments": manifests,
    }))
    assert main(["report", "--config", str(cfg)]) == 0
    md = (out / "report.md").read_text()
    assert "| model | d1 | d2 | d3 | d1+d2+d3 | mean individual | delta |" in md
    model_rows = [l for l in md.splitlines() if l.startswith("| gbt") or l.startswith("| lstm")]
    assert len(model_rows) == 2  # 2 models x 4 dataset columns
    report = json.loads((out / "report.json").read_text())
    assert len(report["results"]) == 8


def test_console_script_is_installed():
    proc = subprocess.run(
        ["agisense", "--help"], capture_output=True, text=True, timeout=60
    )
    assert proc.returncode == 0
    for command in ("generate", "ingest", "features", "train", "evaluate",
                    "importance", "report"):
        assert command in proc.stdout
