"""Micro-scale pipeline runs and CLI smoke tests.

The full-size synthetic run lives in the acceptance suite; here every stage
runs once at toy scale to pin wiring, caching, and error surfacing.
"""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from idt.cli import main, parse_channels, parse_exclusions, parse_hue_band
from idt.errors import StageError
from idt.features import FeatureTable
from idt.model import build_model, make_config, save_checkpoint
from idt.pipeline import load_config, run_pipeline

MICRO_CONFIG = {
    "seed": 3,
    "synth": {
        "classes": {"blueblob": {"hue": 0.60}, "pinkblob": {"hue": 0.92}},
        "n_per_class": 8,
        "image_size": 160,
        "split_fraction": 0.75,
    },
    "train": {"preset": "cnn4", "epochs": 1, "lr": 0.01, "momentum": 0.9, "batch_size": 8},
    "tree": {"max_depth": 2, "min_samples_split": 2, "min_samples_leaf": 1, "criterion": "gini", "exclude": []},
    "viz": {"steps": 3, "step_size": 0.1, "jitter_pixels": 1, "tv_weight": 1e-3, "l2_weight": 1e-4, "dead_threshold": 1e-4},
}

ARTIFACTS = [
    "config.resolved.json",
    "cells/manifest.json",
    "checkpoint/config.json",
    "checkpoint/weights.pt",
    "features.npz",
    "tree.json",
    "itree.json",
    "tree.svg",
    "metrics.json",
]


@pytest.fixture(scope="module")
def micro_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("micro") / "run"
    config = load_config(overrides={**MICRO_CONFIG, "out": str(out)})
    run_pipeline(config)
    return config, out


class TestPipeline:
    def test_all_artifacts_exist(self, micro_run):
        _, out = micro_run
        for rel in ARTIFACTS:
            assert (out / rel).exists(), rel

    def test_metrics_contents(self, micro_run):
        _, out = micro_run
        metrics = json.loads((out / "metrics.json").read_text())
        assert "cnn_test_acc" in metrics and "tree_test_acc" in metrics
        assert metrics["tree_train_acc"] is not None

    def test_rerun_skips_and_keeps_timestamps(self, micro_run):
        config, out = micro_run
        before = {rel: (out / rel).stat().st_mtime_ns for rel in ARTIFACTS}
        run_pipeline(config)
        after = {rel: (out / rel).stat().st_mtime_ns for rel in ARTIFACTS}
        assert before == after

    def test_bad_layer_fails_at_features_stage(self, tmp_path):
        config = load_config(
            overrides={
                **MICRO_CONFIG,
                "out": str(tmp_path / "bad"),
                "synth": {**MICRO_CONFIG["synth"], "n_per_class": 4},
                "train": {**MICRO_CONFIG["train"], "epochs": 0},
                "features": {"layer": "XX"},
            }
        )
        with pytest.raises(StageError) as err:
            run_pipeline(config)
        assert err.value.stage == "features"
        assert "features" in str(err.value)

    def test_live_lock_blocks(self, micro_run):
        config, out = micro_run
        lock = out / ".idt.lock"
        lock.write_text(str(os.getpid()))
        try:
            with pytest.raises(StageError) as err:
                run_pipeline(config)
            assert err.value.stage == "lock"
        finally:
            lock.unlink()

    def test_stale_lock_is_reclaimed(self, micro_run):
        config, out = micro_run
        (out / ".idt.lock").write_text("999999999")
        run_pipeline(config)  # reclaims and completes (all stages skip)
        assert not (out / ".idt.lock").exists()


class TestParsers:
    def test_hue_band(self):
        assert parse_hue_band("0.55:0.97") == (0.55, 0.97)

    def test_channels_range(self):
        assert parse_channels("0..5") == [0, 1, 2, 3, 4, 5]
        assert parse_channels("1,5,9") == [1, 5, 9]
        assert parse_channels("0..2,7") == [0, 1, 2, 7]

    def test_exclusions(self):
        assert parse_exclusions("6_5_9,0_0_20") == ["6_5_9", "0_0_20"]
        assert parse_exclusions("") == []


class TestCli:
    def test_synth_command(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"classes": {"a": {"hue": 0.6}, "b": {"hue": 0.9}}, "image_size": 160}))
        runner = CliRunner()
        result = runner.invoke(
            main, ["synth", "--spec", str(spec), "--n", "2", "--out", str(tmp_path / "d"), "--seed", "1"]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "d" / "manifest.json").exists()
        assert len(list((tmp_path / "d" / "a").glob("*.png"))) == 2

    def test_extract_command(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"classes": {"a": {"hue": 0.6}, "b": {"hue": 0.9}}, "image_size": 160}))
        runner = CliRunner()
        runner.invoke(main, ["synth", "--spec", str(spec), "--n", "2", "--out", str(tmp_path / "raw")])
        result = runner.invoke(
            main,
            ["extract", "--in", str(tmp_path / "raw"), "--out", str(tmp_path / "cells"), "--split-fraction", "0.5"],
        )
        assert result.exit_code == 0, result.output
        cells = list((tmp_path / "cells").rglob("*.png"))
        assert len(cells) == 4
        from PIL import Image

        with Image.open(cells[0]) as im:
            assert im.size == (100, 100)

    def test_tree_fit_and_score(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(30, 8)).astype(np.float32)
        y = (X[:, 3] > 0.5).astype(np.int64)
        table = FeatureTable(
            X, y, "L", (2, 2, 2), ["a", "b"],
            paths=[f"p{i}" for i in range(30)],
            splits=["train"] * 20 + ["test"] * 10,
        )
        feats = tmp_path / "f.npz"
        table.save(feats)
        runner = CliRunner()
        out = tmp_path / "tree.json"
        result = runner.invoke(
            main, ["tree", "fit", "--feats", str(feats), "--max-depth", "2", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        fit_report = json.loads(result.output.strip().splitlines()[-1])
        assert fit_report["train_acc"] == 1.0
        result = runner.invoke(main, ["tree", "score", "--tree", str(out), "--feats", str(feats)])
        assert result.exit_code == 0
        score = json.loads(result.output)
        assert score["test_acc"] == 1.0

    def test_tree_fit_with_exclusions(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(30, 8)).astype(np.float32)
        y = (X[:, 3] > 0.5).astype(np.int64)
        FeatureTable(X, y, "L", (2, 2, 2), ["a", "b"]).save(tmp_path / "f.npz")
        runner = CliRunner()
        result = runner.invoke(
            main,
            ["tree", "fit", "--feats", str(tmp_path / "f.npz"), "--exclude", "0_1_1", "--out", str(tmp_path / "t.json")],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads((tmp_path / "t.json").read_text())
        used = {n["feature"] for n in doc["nodes"] if n["feature"]}
        assert "0_1_1" not in used  # 0_1_1 is flat index 3

    def test_viz_command(self, tmp_path):
        model = build_model(make_config("cnn4", seed=0), 2)
        save_checkpoint(model, tmp_path / "ckpt")
        runner = CliRunner()
        result = runner.invoke(
            main,
            [
                "viz", "--model", str(tmp_path / "ckpt"), "--layer", "1",
                "--channels", "0..3", "--steps", "2", "--out", str(tmp_path / "viz"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "viz" / "grid_1.png").exists()
        assert (tmp_path / "viz" / "1_0.png").exists()
        assert (tmp_path / "viz" / "1_0.json").exists()

    def test_bestchannel_command(self, tmp_path, micro_run):
        _, out = micro_run
        cells = sorted((out / "cells").rglob("*.png"))
        runner = CliRunner()
        result = runner.invoke(
            main,
            [
                "bestchannel", "--model", str(out / "checkpoint"), "--image", str(cells[0]),
                "--layer", "1", "--steps", "2", "--out", str(tmp_path / "mosaic.png"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "mosaic.png").exists()
        doc = json.loads((tmp_path / "mosaic.json").read_text())
        assert doc["H"] == 50 and doc["W"] == 50

    def test_illuminate_command(self, tmp_path, micro_run):
        _, out = micro_run
        runner = CliRunner()
        result = runner.invoke(
            main,
            [
                "illuminate", "--tree", str(out / "tree.json"), "--model", str(out / "checkpoint"),
                "--feats", str(out / "features.npz"), "--data", str(out / "cells"),
                "--steps", "2", "--out", str(tmp_path / "ill"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "ill" / "itree.json").exists()
        assert (tmp_path / "ill" / "tree.svg").exists()

    def test_run_command_reuses_cache(self, micro_run, tmp_path):
        config, out = micro_run
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps(config))
        runner = CliRunner()
        result = runner.invoke(main, ["run", "--config", str(cfg_file)])
        assert result.exit_code == 0, result.output
        assert "pipeline complete" in result.output

    def test_run_command_nonzero_exit_on_stage_failure(self, tmp_path):
        cfg = {
            **MICRO_CONFIG,
            "out": str(tmp_path / "broken"),
            "synth": {**MICRO_CONFIG["synth"], "n_per_class": 4},
            "train": {**MICRO_CONFIG["train"], "epochs": 0},
            "features": {"layer": "XX"},
        }
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps(cfg))
        result = CliRunner().invoke(main, ["run", "--config", str(cfg_file)])
        assert result.exit_code == 1
        assert "features" in result.output
