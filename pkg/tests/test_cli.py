import csv
import json
import logging

import pytest
import yaml

from trajdiff.cli import main
from trajdiff.config import ConfigError, RunConfig


def write_config(tmp_path, **overrides):
    cfg = {
        "version": 1,
        "seed": 0,
        "output_dir": "run",
        "dataset": {"path": "data", "profile": "highway"},
        "model": {"hidden": 8, "attn_heads": 2},
        "train": {"steps": 3, "batch_size": 4},
        "diffusion": {"steps": 2},
        "evaluation": {"n_samples": 2, "weights": [0.0, 1.0]},
    }
    for key, value in overrides.items():
        cfg[key] = {**cfg.get(key, {}), **value} if isinstance(value, dict) else value
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-synthetic", "--kind", "straight_lane_change", "--n", "6", "--seed", "1",
                 "--out", str(root / "data")]) == 0
    cfg = write_config(root)
    assert main(["train", "--config", str(cfg)]) == 0
    return root, cfg


def test_schema_error_reports_field_path(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("version: 1\ndataset:\n  profile: highway\n", encoding="utf-8")
    assert main(["train", "--config", str(path)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and err["path"] == "dataset.path"


def test_config_unknown_key_and_bad_value():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({"version": 1, "dataset": {"path": "x"}, "train": {"lrate": 1}})
    assert info.value.field_path == "train.lrate"
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({"version": 1, "dataset": {"path": "x"}, "diffusion": {"sampler": "heun"}})
    assert info.value.field_path == "diffusion.sampler"


def test_config_builders():
    cfg = RunConfig.from_dict({"version": 1, "dataset": {"path": "x", "profile": "roundabout"},
                               "refinement": {"enabled": True, "exponent": 2}})
    assert cfg.model_config().profile == "roundabout"
    assert cfg.pursuit().exponent == 2
    assert cfg.evaluation()["variant"] == "refined"


def test_gen_synthetic_files(trained):
    root, _ = trained
    assert len(list((root / "data").glob("*.csv"))) == 6
    assert len(list((root / "data").glob("*.lanes.json"))) == 6


def test_train_outputs(trained):
    root, _ = trained
    run = root / "run"
    assert (run / "checkpoint.pt").exists() and (run / "config.yaml").exists()
    assert (run / "train.args.json").exists()
    with (run / "loss_curve.csv").open() as fh:
        assert len(list(csv.reader(fh))) == 4


def test_evaluate_with_step_override(trained, capsys, caplog):
    root, cfg = trained
    with caplog.at_level(logging.INFO, logger="trajdiff.diffusion"):
        assert main(["evaluate", "--config", str(cfg), "--steps", "3", "--w", "1.0"]) == 0
    assert "3 reverse steps" in caplog.text
    out = capsys.readouterr().out
    assert "ours (w=1.0)" in out
    with (root / "run" / "metrics.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["variant"] == "full" and rows[0]["w"] == "1.0"


def test_sweep_rows(trained):
    root, cfg = trained
    assert main(["sweep-guidance", "--config", str(cfg)]) == 0
    with (root / "run" / "sweep.csv").open() as fh:
        assert [r["w"] for r in csv.DictReader(fh)] == ["0.0", "1.0"]


def test_refined_variant_row(trained):
    root, cfg = trained
    assert main(["evaluate", "--config", str(cfg), "--variant", "refined"]) == 0
    with (root / "run" / "metrics.csv").open() as fh:
        assert next(csv.DictReader(fh))["variant"] == "refined"


def test_variant_mismatch_exit_code(trained, capsys):
    _, cfg = trained
    assert main(["evaluate", "--config", str(cfg), "--variant", "no_motion_model"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["path"] == "evaluation.variant"


def test_plot_one_file_per_scene(trained):
    root, cfg = trained
    ids = sorted(p.name[:-4] for p in (root / "data").glob("*.csv"))[:2]
    assert main(["plot", "--config", str(cfg), "--scene", *ids, "--w", "0.0", "1.0", "--samples", "2"]) == 0
    svgs = sorted((root / "run" / "plots").glob("*.svg"))
    assert [p.stem for p in svgs] == ids
    assert svgs[0].read_text().count("w = ") >= 2


def test_plot_unknown_scene(trained, capsys):
    _, cfg = trained
    assert main(["plot", "--config", str(cfg), "--scene", "nope"]) == 1
    assert "nope" in capsys.readouterr().err


def test_missing_checkpoint(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["evaluate", "--config", str(cfg), "--checkpoint", str(tmp_path / "none.pt")]) == 1
    assert json.loads(capsys.readouterr().err.strip())["error"] == "FileNotFoundError"
