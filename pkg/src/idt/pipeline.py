"""End-to-end pipeline: synth/extract -> train -> features -> tree -> illuminate.

Each stage records a content hash of its direct inputs plus its config
subsection; a re-run skips stages whose hash matches and whose outputs still
exist, so the exclude-and-rebuild loop never retrains the CNN. A lock file
keeps two runs out of one output directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from contextlib import contextmanager
from pathlib import Path

from . import cellcrop, dtree, model as model_mod
from .errors import StageError
from .featviz import VizCache, VizParams
from .features import FeatureTable
from .illuminate import Session
from .treesvg import render_tree_svg

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "runs/out",
    "synth": None,  # {"classes": {name: {"hue": float, ...}}, "n_per_class": int, ...}
    "data": {"raw_dir": None, "split_fraction": 0.8},
    "extract": {"hue_lo": 0.55, "hue_hi": 0.97, "sat_min": 0.25, "val_min": 0.0, "min_area": 400},
    "train": {"preset": "cnn4", "epochs": 10, "lr": 0.01, "momentum": 0.9, "batch_size": 32},
    "features": {"layer": None},  # None = the preset's designated layer
    "tree": {
        "max_depth": 2,
        "min_samples_split": 2,
        "min_samples_leaf": 1,
        "criterion": "gini",
        "exclude": [],
    },
    "viz": {
        "steps": 256,
        "step_size": 0.1,
        "jitter_pixels": 2,
        "tv_weight": 1e-3,
        "l2_weight": 1e-4,
        "dead_threshold": 1e-4,
    },
}


def merge_config(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as f:
            cfg = merge_config(cfg, json.load(f))
    if overrides:
        cfg = merge_config(cfg, overrides)
    return cfg


def _digest_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _digest_tree(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(_digest_file(p).encode())
    return h.hexdigest()


def _digest_inputs(cfg_section, *paths) -> str:
    h = hashlib.sha256(json.dumps(cfg_section, sort_keys=True).encode())
    for p in paths:
        p = Path(p)
        if p.is_dir():
            h.update(_digest_tree(p).encode())
        elif p.is_file():
            h.update(_digest_file(p).encode())
        else:
            h.update(b"missing")
    return h.hexdigest()


class StageRunner:
    def __init__(self, out_dir: Path, force: bool):
        self.out_dir = out_dir
        self.force = force
        self.marker_dir = out_dir / ".stages"
        self.marker_dir.mkdir(parents=True, exist_ok=True)

    def should_skip(self, stage: str, input_hash: str, outputs: list[Path]) -> bool:
        if self.force:
            return False
        marker = self.marker_dir / f"{stage}.json"
        if not marker.exists() or not all(p.exists() for p in outputs):
            return False
        with open(marker) as f:
            return json.load(f).get("hash") == input_hash

    def mark(self, stage: str, input_hash: str) -> None:
        with open(self.marker_dir / f"{stage}.json", "w") as f:
            json.dump({"hash": input_hash}, f)
            f.write("\n")


@contextmanager
def output_lock(out_dir: Path):
    lock = out_dir / ".idt.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        pid = lock.read_text().strip()
        stale = False
        if pid.isdigit():
            try:
                os.kill(int(pid), 0)
            except ProcessLookupError:
                stale = True
        if not stale:
            raise StageError("lock", RuntimeError(f"{out_dir} is locked by pid {pid or '?'}"))
        lock.unlink()
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def synth_spec_from_config(cfg: dict) -> cellcrop.SynthSpec:
    classes = {
        name: cellcrop.BlobClassSpec(**{"hue": c["hue"], **{k: tuple(v) if isinstance(v, list) else v for k, v in c.items() if k != "hue"}})
        for name, c in cfg["classes"].items()
    }
    return cellcrop.SynthSpec(
        classes=classes,
        n_per_class=cfg.get("n_per_class", 200),
        image_size=cfg.get("image_size", 200),
        split_fraction=cfg.get("split_fraction", 0.8),
    )


def viz_params_from_config(cfg: dict) -> VizParams:
    return VizParams(**cfg)


def tree_params_from_config(cfg: dict, table: FeatureTable) -> dtree.TreeParams:
    excluded = frozenset(
        model_mod.feature_index(model_mod.parse_feature_name(name), table.layer_shape)
        for name in cfg.get("exclude", [])
    )
    return dtree.TreeParams(
        max_depth=cfg["max_depth"],
        min_samples_split=cfg["min_samples_split"],
        min_samples_leaf=cfg["min_samples_leaf"],
        excluded_features=excluded,
        criterion=cfg["criterion"],
        seed=0,
    )


def run_pipeline(config: dict, force: bool = False) -> Path:
    """Run every configured stage; returns the output directory."""
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    with output_lock(out):
        return _run_stages(config, out, force)


def _run_stages(config: dict, out: Path, force: bool) -> Path:
    runner = StageRunner(out, force)
    seed = int(config["seed"])

    resolved = json.dumps(config, indent=2, sort_keys=True) + "\n"
    resolved_path = out / "config.resolved.json"
    if not resolved_path.exists() or resolved_path.read_text() != resolved:
        resolved_path.write_text(resolved)

    # ---- synth ----------------------------------------------------------
    raw_dir = None
    if config.get("synth"):
        raw_dir = out / "data"
        h = _digest_inputs({"synth": config["synth"], "seed": seed})
        if runner.should_skip("synth", h, [raw_dir]):
            print("synth: up to date, skipping")
        else:
            try:
                spec = synth_spec_from_config(config["synth"])
                cellcrop.synth_dataset(spec, raw_dir, seed)
            except Exception as e:
                raise StageError("synth", e) from e
            runner.mark("synth", h)
            print(f"synth: wrote {raw_dir}")
    elif config["data"]["raw_dir"]:
        raw_dir = Path(config["data"]["raw_dir"])

    # ---- extract ---------------------------------------------------------
    cells_dir = out / "cells"
    manifest_path = cells_dir / "manifest.json"
    if raw_dir is None:
        raise StageError("extract", ValueError("no data source: set synth or data.raw_dir"))
    h = _digest_inputs({"extract": config["extract"], "seed": seed, "split": config["data"]["split_fraction"]}, raw_dir)
    if runner.should_skip("extract", h, [manifest_path]):
        print("extract: up to date, skipping")
    else:
        try:
            params = cellcrop.ColorDetectParams(**config["extract"])
            cellcrop.extract_dataset(raw_dir, cells_dir, config["data"]["split_fraction"], seed, params)
        except Exception as e:
            raise StageError("extract", e) from e
        runner.mark("extract", h)
        print(f"extract: wrote {cells_dir}")
    manifest = cellcrop.DatasetManifest.load(manifest_path)

    # ---- train -----------------------------------------------------------
    ckpt_dir = out / "checkpoint"
    h = _digest_inputs({"train": config["train"], "seed": seed}, manifest_path)
    if runner.should_skip("train", h, [ckpt_dir / "config.json", ckpt_dir / "weights.pt"]):
        print("train: up to date, skipping")
        model = model_mod.load_checkpoint(ckpt_dir)
    else:
        try:
            tcfg = config["train"]
            mconfig = model_mod.make_config(tcfg["preset"], seed=seed)
            model = model_mod.build_model(mconfig, len(manifest.classes))
            hp = model_mod.HyperParams(
                epochs=tcfg["epochs"],
                lr=tcfg["lr"],
                momentum=tcfg["momentum"],
                batch_size=tcfg["batch_size"],
                seed=seed,
            )
            model_mod.train(model, manifest, hp)
            model_mod.save_checkpoint(model, ckpt_dir)
        except Exception as e:
            raise StageError("train", e) from e
        runner.mark("train", h)
        print(f"train: test acc {model.train_metrics.get('final_test_acc')}")

    # ---- features --------------------------------------------------------
    feats_path = out / "features.npz"
    layer = config["features"]["layer"] or model.feature_layer
    h = _digest_inputs({"features": {"layer": layer}}, ckpt_dir, manifest_path)
    if runner.should_skip("features", h, [feats_path]):
        print("features: up to date, skipping")
    else:
        try:
            table = model_mod.extract_feature_vectors(model, manifest, layer)
            table.save(feats_path)
        except Exception as e:
            raise StageError("features", e) from e
        runner.mark("features", h)
        print(f"features: wrote {feats_path}")
    table = FeatureTable.load(feats_path)

    # ---- tree ------------------------------------------------------------
    tree_path = out / "tree.json"
    h = _digest_inputs({"tree": config["tree"]}, feats_path)
    if runner.should_skip("tree", h, [tree_path]):
        print("tree: up to date, skipping")
    else:
        try:
            params = tree_params_from_config(config["tree"], table)
            train_rows = table.subset("train")
            tree = dtree.fit_tree(train_rows if len(train_rows) else table, params)
            dtree.save_tree(tree, tree_path)
        except Exception as e:
            raise StageError("tree", e) from e
        runner.mark("tree", h)
        print(f"tree: wrote {tree_path}")
    tree = dtree.load_tree(tree_path)

    # ---- illuminate ------------------------------------------------------
    itree_path = out / "itree.json"
    svg_path = out / "tree.svg"
    metrics_path = out / "metrics.json"
    assets = out / "assets"
    h = _digest_inputs({"viz": config["viz"], "seed": seed}, tree_path, ckpt_dir, feats_path)
    if runner.should_skip("illuminate", h, [itree_path, svg_path, metrics_path]):
        print("illuminate: up to date, skipping")
    else:
        try:
            viz_params = viz_params_from_config({**config["viz"], "seed": seed})
            cache = VizCache(assets / "features")
            session = Session(
                model,
                table,
                tree_params_from_config(config["tree"], table),
                viz_params,
                manifest=manifest,
                viz_cache=cache,
            )
            itree = session.latest
            itree.save(itree_path)
            svg = render_tree_svg(itree, asset_root=assets)
            with open(svg_path, "w") as f:
                f.write(svg)
            metrics = dict(itree.metrics)
            metrics["cnn_train_acc"] = model.train_metrics.get("final_train_acc")
            with open(metrics_path, "w") as f:
                json.dump(metrics, f, indent=2, sort_keys=True)
                f.write("\n")
        except Exception as e:
            raise StageError("illuminate", e) from e
        runner.mark("illuminate", h)
        print(f"illuminate: wrote {itree_path} and {svg_path}")
    return out
