"""The idt command line: every pipeline stage, plus the explorer server."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import bestchannel as bc
from . import cellcrop, dtree, model as model_mod, pipeline
from .errors import IdtError, StageError
from .features import FeatureTable, feature_index, parse_feature_name
from .featviz import VizCache, VizParams, visualize_layer_grid
from .illuminate import IlluminatedTree, Session
from .treesvg import render_tree_svg


def parse_hue_band(value: str) -> tuple[float, float]:
    lo, _, hi = value.partition(":")
    return float(lo), float(hi)


def parse_channels(value: str) -> list[int]:
    """"0..23" or "1,5,9" or a mix like "0..3,9"."""
    out: list[int] = []
    for part in value.split(","):
        if ".." in part:
            lo, _, hi = part.partition("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def parse_exclusions(value: str) -> list[str]:
    return [p for p in value.split(",") if p]


@click.group()
def main():
    """Illuminated decision trees over CNN features."""


@main.command()
@click.option("--spec", "spec_file", type=click.Path(exists=True), required=True, help="JSON synth spec")
@click.option("--n", "n_per_class", type=int, default=None, help="images per class (overrides spec)")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0)
def synth(spec_file, n_per_class, out_dir, seed):
    """Generate a synthetic blob dataset."""
    with open(spec_file) as f:
        doc = json.load(f)
    if n_per_class is not None:
        doc["n_per_class"] = n_per_class
    spec = pipeline.synth_spec_from_config(doc)
    manifest = cellcrop.synth_dataset(spec, out_dir, seed)
    manifest.save(Path(out_dir) / "manifest.json")
    click.echo(f"wrote {len(manifest.entries)} images across {len(manifest.classes)} classes to {out_dir}")


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--hue-band", default="0.55:0.97", help="LO:HI hue band of the cell mask")
@click.option("--sat-min", type=float, default=0.25)
@click.option("--min-area", type=int, default=400)
@click.option("--split-fraction", type=float, default=0.8)
@click.option("--seed", type=int, default=0)
def extract(in_dir, out_dir, hue_band, sat_min, min_area, split_fraction, seed):
    """Detect cells and write 100x100 crops."""
    lo, hi = parse_hue_band(hue_band)
    params = cellcrop.ColorDetectParams(hue_lo=lo, hue_hi=hi, sat_min=sat_min, min_area=min_area)
    manifest = cellcrop.extract_dataset(in_dir, out_dir, split_fraction, seed, params)
    click.echo(f"extracted {len(manifest.entries)} cells to {out_dir}")


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True, help="cells dir with manifest.json")
@click.option("--preset", type=click.Choice(["cnn4", "cnn6"]), default="cnn4")
@click.option("--epochs", type=int, default=10)
@click.option("--lr", type=float, default=0.01)
@click.option("--batch-size", type=int, default=32)
@click.option("--seed", type=int, default=0)
@click.option("--out", "ckpt_dir", type=click.Path(), required=True)
def train(data_dir, preset, epochs, lr, batch_size, seed, ckpt_dir):
    """Train a CNN preset on extracted cells."""
    manifest = cellcrop.DatasetManifest.load(Path(data_dir) / "manifest.json")
    config = model_mod.make_config(preset, seed=seed)
    model = model_mod.build_model(config, len(manifest.classes))
    hp = model_mod.HyperParams(epochs=epochs, lr=lr, batch_size=batch_size, seed=seed)
    model_mod.train(model, manifest, hp)
    model_mod.save_checkpoint(model, ckpt_dir)
    click.echo(json.dumps(model.train_metrics, sort_keys=True))


@main.command()
@click.option("--model", "ckpt_dir", type=click.Path(exists=True), required=True)
@click.option("--layer", default=None, help="layer name; defaults to the designated feature layer")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def features(ckpt_dir, layer, data_dir, out_path):
    """Export flattened feature vectors for every manifest image."""
    model = model_mod.load_checkpoint(ckpt_dir)
    manifest = cellcrop.DatasetManifest.load(Path(data_dir) / "manifest.json")
    table = model_mod.extract_feature_vectors(model, manifest, layer or model.feature_layer)
    table.save(out_path)
    click.echo(f"wrote {len(table)} x {table.n_features} table to {out_path}")


@main.command()
@click.option("--model", "ckpt_dir", type=click.Path(exists=True), required=True)
@click.option("--layer", default=None)
@click.option("--channels", default="0..23", help='e.g. "0..23" or "1,5,9"')
@click.option("--steps", type=int, default=256)
@click.option("--step-size", type=float, default=0.1)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def viz(ckpt_dir, layer, channels, steps, step_size, seed, out_dir):
    """Visualize channels by gradient ascent; writes PNGs plus a grid image."""
    model = model_mod.load_checkpoint(ckpt_dir)
    layer = layer or model.feature_layer
    params = VizParams(steps=steps, step_size=step_size, seed=seed)
    chans = parse_channels(channels)
    grid, images = visualize_layer_grid(model, layer, chans, params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = VizCache(out)
    for fi in images:
        cache.put(fi)
    Image.fromarray(grid).save(out / f"grid_{layer}.png")
    dead = sum(1 for fi in images if fi.dead)
    click.echo(f"wrote {len(images)} visualizations ({dead} dead) and grid_{layer}.png to {out}")


@main.command("bestchannel")
@click.option("--model", "ckpt_dir", type=click.Path(exists=True), required=True)
@click.option("--image", "image_path", type=click.Path(exists=True), required=True)
@click.option("--layer", default=None)
@click.option("--viz-dir", type=click.Path(), default=None, help="cache dir of channel visualizations")
@click.option("--steps", type=int, default=256)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), required=True)
def bestchannel_cmd(ckpt_dir, image_path, layer, viz_dir, steps, seed, out_path):
    """Render the strongest-feature mosaic for one image."""
    model = model_mod.load_checkpoint(ckpt_dir)
    layer = layer or model.feature_layer
    image = cellcrop.load_image(image_path)
    fmap = model_mod.forward_features(model, image, layer)
    bmap = bc.best_channel_map(fmap, layer)
    cache = VizCache(viz_dir) if viz_dir else VizCache()
    params = VizParams(steps=steps, seed=seed)
    for ch in sorted(set(int(c) for c in bmap.channels.reshape(-1))):
        cache.get_or_create(model, layer, ch, params)
    mosaic = bc.render_best_channel_image(bmap, cache, bc.MosaicStyle(background=image, background_opacity=0.25))
    Image.fromarray(mosaic).save(out_path)
    bmap.save(Path(out_path).with_suffix(".json"))
    click.echo(f"wrote {out_path}")


@main.group()
def tree():
    """Fit and score decision trees on feature tables."""


@tree.command("fit")
@click.option("--feats", type=click.Path(exists=True), required=True)
@click.option("--max-depth", type=int, default=4)
@click.option("--min-samples-leaf", type=int, default=1)
@click.option("--exclude", default="", help="comma-separated feature names, e.g. 6_5_9,0_0_20")
@click.option("--criterion", type=click.Choice(["gini", "entropy"]), default="gini")
@click.option("--out", "out_path", type=click.Path(), required=True)
def tree_fit(feats, max_depth, min_samples_leaf, exclude, criterion, out_path):
    table = FeatureTable.load(feats)
    excluded = frozenset(
        feature_index(parse_feature_name(n), table.layer_shape) for n in parse_exclusions(exclude)
    )
    params = dtree.TreeParams(
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        excluded_features=excluded,
        criterion=criterion,
    )
    train_rows = table.subset("train")
    fitted = dtree.fit_tree(train_rows if len(train_rows) else table, params)
    dtree.save_tree(fitted, out_path)
    train_acc = dtree.tree_accuracy(fitted, train_rows) if len(train_rows) else None
    test_rows = table.subset("test")
    test_acc = dtree.tree_accuracy(fitted, test_rows) if len(test_rows) else None
    click.echo(json.dumps({"train_acc": train_acc, "test_acc": test_acc, "depth": fitted.depth()}))


@tree.command("score")
@click.option("--tree", "tree_path", type=click.Path(exists=True), required=True)
@click.option("--feats", type=click.Path(exists=True), required=True)
def tree_score(tree_path, feats):
    fitted = dtree.load_tree(tree_path)
    table = FeatureTable.load(feats)
    out = {}
    for split in ("train", "test"):
        rows = table.subset(split)
        out[f"{split}_acc"] = dtree.tree_accuracy(fitted, rows) if len(rows) else None
    click.echo(json.dumps(out, sort_keys=True))


@main.command()
@click.option("--tree", "tree_path", type=click.Path(exists=True), required=True)
@click.option("--model", "ckpt_dir", type=click.Path(exists=True), required=True)
@click.option("--feats", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(), default=None, help="cells dir with manifest.json")
@click.option("--steps", type=int, default=256)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def illuminate(tree_path, ckpt_dir, feats, data_dir, steps, seed, out_dir):
    """Attach visualizations and stats to a fitted tree; emit itree.json + tree.svg."""
    from .illuminate import build_illuminated_tree

    model = model_mod.load_checkpoint(ckpt_dir)
    table = FeatureTable.load(feats)
    fitted = dtree.load_tree(tree_path)
    manifest = None
    if data_dir:
        manifest = cellcrop.DatasetManifest.load(Path(data_dir) / "manifest.json")
    out = Path(out_dir)
    cache = VizCache(out / "assets" / "features")
    itree = build_illuminated_tree(
        fitted, model, VizParams(steps=steps, seed=seed), table, manifest, cache
    )
    itree.excluded_names = sorted(
        model_mod.feature_id_of(i, fitted.layer_shape).name for i in fitted.params.excluded_features
    )
    itree.save(out / "itree.json")
    with open(out / "tree.svg", "w") as f:
        f.write(render_tree_svg(itree, asset_root=out / "assets"))
    click.echo(f"wrote {out / 'itree.json'} and {out / 'tree.svg'}")


@main.command()
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None, help="override the config's output dir")
@click.option("--seed", type=int, default=None)
@click.option("--force", is_flag=True, help="re-run every stage even if up to date")
def run(config_file, out_dir, seed, force):
    """Run the full pipeline from a config file."""
    overrides = {}
    if out_dir is not None:
        overrides["out"] = out_dir
    if seed is not None:
        overrides["seed"] = seed
    config = pipeline.load_config(config_file, overrides)
    try:
        out = pipeline.run_pipeline(config, force=force)
    except StageError as e:
        click.echo(str(e), err=True)
        sys.exit(1)
    click.echo(f"pipeline complete: {out}")


@main.command()
@click.option("--session", "session_dir", type=click.Path(exists=True), required=True)
@click.option("--port", type=int, default=8080)
@click.option("--host", default="127.0.0.1")
def serve(session_dir, port, host):
    """Serve the explorer API (and the UI bundle when built) for a session."""
    import uvicorn

    from .server.app import create_app, default_ui_dir, load_api_session

    api = load_api_session(session_dir)
    app = create_app(api, ui_dir=default_ui_dir())
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
