"""Small CNN classifiers and spatial feature export.

Two presets are built in. ``cnn4`` is four conv blocks (16/32/64/128
channels); the fourth block lands on a 10x10x128 map from the 100x100 input
and is the designated feature layer, named "4M". ``cnn6`` stacks six blocks
(16/32/64/64/128/128) with the designated 10x10x128 layer at block five
("5M"). Designated layers feed the tree: their maps flatten row-major,
channel fastest (see features.feature_index).

Inputs are scaled to [0,1] and normalized per channel with statistics
computed on the train split; the stats live in the checkpoint so that
visualization can invert the exact same mapping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .cellcrop import DatasetManifest, load_image
from .errors import DivergedTraining, EmptySplit, UnknownLayer
from .features import FeatureTable, FeatureId, feature_id_of, feature_index, parse_feature_name

__all__ = [
    "ConvBlockSpec",
    "ModelConfig",
    "TrainedModel",
    "HyperParams",
    "make_config",
    "build_model",
    "train",
    "evaluate",
    "forward_features",
    "extract_feature_vectors",
    "dead_channel_report",
    "save_checkpoint",
    "load_checkpoint",
    "feature_index",
    "feature_id_of",
    "parse_feature_name",
    "FeatureId",
]


@dataclass(frozen=True)
class ConvBlockSpec:
    out_channels: int
    kernel: int = 3
    padding: int = 1
    pool: bool = False


@dataclass(frozen=True)
class ModelConfig:
    preset: str
    blocks: tuple[ConvBlockSpec, ...]
    layer_names: tuple[str, ...]
    feature_layer: str
    input_size: tuple[int, int] = (100, 100)
    in_channels: int = 3
    seed: int = 0


def make_config(preset: str, seed: int = 0, input_size: tuple[int, int] = (100, 100)) -> ModelConfig:
    if preset == "cnn4":
        blocks = (
            ConvBlockSpec(16, 3, 1, pool=True),   # 100 -> 50
            ConvBlockSpec(32, 3, 1, pool=True),   # 50 -> 25
            ConvBlockSpec(64, 3, 1, pool=True),   # 25 -> 12
            ConvBlockSpec(128, 3, 0, pool=False),  # 12 -> 10, the "4M" map
        )
        names = ("1", "2", "3", "4M")
        return ModelConfig(preset, blocks, names, "4M", input_size, seed=seed)
    if preset == "cnn6":
        blocks = (
            ConvBlockSpec(16, 3, 1, pool=True),   # 100 -> 50
            ConvBlockSpec(32, 3, 1, pool=True),   # 50 -> 25
            ConvBlockSpec(64, 3, 1, pool=True),   # 25 -> 12
            ConvBlockSpec(64, 3, 1, pool=False),  # 12
            ConvBlockSpec(128, 3, 0, pool=False),  # 12 -> 10, the "5M" map
            ConvBlockSpec(128, 3, 1, pool=False),  # 10
        )
        names = ("1", "2", "3", "4", "5M", "6")
        return ModelConfig(preset, blocks, names, "5M", input_size, seed=seed)
    raise ValueError(f"unknown preset {preset!r}")


class ConvNet(nn.Module):
    """Conv blocks (conv + ReLU, optional 2x max pool), GAP head, linear classifier."""

    def __init__(self, config: ModelConfig, n_classes: int):
        super().__init__()
        self.config = config
        self.n_classes = n_classes
        layers = []
        in_ch = config.in_channels
        for spec in config.blocks:
            block = [nn.Conv2d(in_ch, spec.out_channels, spec.kernel, padding=spec.padding), nn.ReLU()]
            if spec.pool:
                block.append(nn.MaxPool2d(2))
            layers.append(nn.Sequential(*block))
            in_ch = spec.out_channels
        self.blocks = nn.ModuleList(layers)
        self.head = nn.Linear(in_ch, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        x = x.mean(dim=(2, 3))
        return self.head(x)

    def forward_to_layer(self, x: torch.Tensor, layer_name: str) -> torch.Tensor:
        names = self.config.layer_names
        if layer_name not in names:
            raise UnknownLayer(f"no layer {layer_name!r}; have {list(names)}")
        for name, block in zip(names, self.blocks):
            x = block(x)
            if name == layer_name:
                return x
        raise UnknownLayer(layer_name)  # unreachable


@dataclass
class HyperParams:
    epochs: int = 20
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    seed: int = 0


class TrainedModel:
    """A ConvNet plus everything inference needs: class order and norm stats."""

    def __init__(
        self,
        config: ModelConfig,
        net: ConvNet,
        class_order: list[str],
        norm_mean: np.ndarray | None = None,
        norm_std: np.ndarray | None = None,
        train_metrics: dict | None = None,
    ):
        self.config = config
        self.net = net
        self.class_order = list(class_order)
        self.norm_mean = np.asarray(norm_mean if norm_mean is not None else np.zeros(3), dtype=np.float64)
        self.norm_std = np.asarray(norm_std if norm_std is not None else np.ones(3), dtype=np.float64)
        self.train_metrics = train_metrics or {}

    @property
    def n_classes(self) -> int:
        return len(self.class_order)

    @property
    def feature_layer(self) -> str:
        return self.config.feature_layer

    def layer_shape(self, layer_name: str) -> tuple[int, int, int]:
        h, w = self.config.input_size
        dtype = next(self.net.parameters()).dtype
        with torch.no_grad():
            t = self.net.forward_to_layer(torch.zeros(1, self.config.in_channels, h, w, dtype=dtype), layer_name)
        return (int(t.shape[2]), int(t.shape[3]), int(t.shape[1]))

    def normalize(self, pixels: torch.Tensor) -> torch.Tensor:
        """Map an NCHW tensor of [0,1] pixels into the network's input space."""
        mean = torch.as_tensor(self.norm_mean, dtype=pixels.dtype).view(1, 3, 1, 1)
        std = torch.as_tensor(self.norm_std, dtype=pixels.dtype).view(1, 3, 1, 1)
        return (pixels - mean) / std

    def to_input(self, images: np.ndarray) -> torch.Tensor:
        """uint8 NHWC (or HWC) in [0,255] -> normalized float NCHW tensor."""
        if images.ndim == 3:
            images = images[None]
        arr = np.ascontiguousarray(images)
        if not arr.flags.writeable:
            arr = arr.copy()
        dtype = next(self.net.parameters()).dtype
        x = torch.from_numpy(arr).to(dtype) / 255.0
        return self.normalize(x.permute(0, 3, 1, 2))


def build_model(config: ModelConfig, n_classes: int) -> TrainedModel:
    """Untrained model with deterministic weight init from config.seed."""
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    torch.manual_seed(config.seed)
    net = ConvNet(config, n_classes)
    net.eval()
    return TrainedModel(config, net, [str(i) for i in range(n_classes)])


def _load_split(manifest: DatasetManifest, split: str) -> tuple[np.ndarray, np.ndarray]:
    entries = manifest.split_entries(split)
    root = Path(manifest.root)
    images = np.stack([load_image(root / e.path) for e in entries]) if entries else np.zeros((0, 100, 100, 3), np.uint8)
    labels = np.array([manifest.class_index(e.class_label) for e in entries], dtype=np.int64)
    return images, labels


def train(model: TrainedModel, manifest: DatasetManifest, hp: HyperParams) -> TrainedModel:
    """SGD-with-momentum training on the manifest's train split, in place.

    Deterministic given (model config seed, hp.seed, manifest). Raises
    DivergedTraining on a non-finite loss.
    """
    images, labels = _load_split(manifest, "train")
    if len(images) == 0:
        raise EmptySplit("manifest has no train entries")
    model.class_order = list(manifest.classes)
    if model.net.n_classes != len(manifest.classes):
        raise ValueError(
            f"model head has {model.net.n_classes} classes, manifest has {len(manifest.classes)}"
        )

    # per-channel mean/std of [0,1] pixels, accumulated in chunks
    s = np.zeros(3)
    ss = np.zeros(3)
    for start in range(0, len(images), 256):
        chunk = images[start : start + 256].astype(np.float64) / 255.0
        s += chunk.sum(axis=(0, 1, 2))
        ss += (chunk**2).sum(axis=(0, 1, 2))
    count = images.shape[0] * images.shape[1] * images.shape[2]
    model.norm_mean = s / count
    model.norm_std = np.maximum(np.sqrt(np.maximum(ss / count - model.norm_mean**2, 0.0)), 1e-6)

    y_all = torch.from_numpy(labels)

    net = model.net
    net.train()
    opt = torch.optim.SGD(net.parameters(), lr=hp.lr, momentum=hp.momentum)
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(hp.seed)
    final_loss = float("nan")
    for _epoch in range(hp.epochs):
        order = rng.permutation(len(images))
        for start in range(0, len(order), hp.batch_size):
            idx = order[start : start + hp.batch_size]
            opt.zero_grad()
            out = net(model.to_input(images[idx]))
            loss = loss_fn(out, y_all[torch.from_numpy(idx.copy())])
            if not torch.isfinite(loss):
                raise DivergedTraining(f"loss became {loss.item()} during epoch {_epoch}")
            loss.backward()
            opt.step()
            final_loss = float(loss.item())
    net.eval()

    metrics = {"epochs": hp.epochs, "final_loss": final_loss}
    metrics["final_train_acc"] = evaluate(model, manifest, "train")
    if manifest.split_entries("test"):
        metrics["final_test_acc"] = evaluate(model, manifest, "test")
    model.train_metrics = metrics
    return model


def _batched_logits(model: TrainedModel, images: np.ndarray, batch: int = 64) -> np.ndarray:
    outs = []
    with torch.no_grad():
        for start in range(0, len(images), batch):
            x = model.to_input(images[start : start + batch])
            outs.append(model.net(x).numpy())
    return np.concatenate(outs) if outs else np.zeros((0, model.n_classes))


def evaluate(model: TrainedModel, manifest: DatasetManifest, split: str) -> float:
    """Accuracy under argmax of logits; ties break to the lowest class index."""
    images, labels = _load_split(manifest, split)
    if len(images) == 0:
        raise EmptySplit(f"manifest has no {split!r} entries")
    logits = _batched_logits(model, images)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def forward_features(model: TrainedModel, image: np.ndarray, layer_name: str) -> np.ndarray:
    """Post-ReLU activation map at a named layer, as (H, W, C) float32."""
    with torch.no_grad():
        t = model.net.forward_to_layer(model.to_input(image), layer_name)
    return t[0].permute(1, 2, 0).numpy().astype(np.float32)


def extract_feature_vectors(
    model: TrainedModel, manifest: DatasetManifest, layer_name: str, batch: int = 64
) -> FeatureTable:
    """Flatten every manifest image's feature map into one table row."""
    shape = model.layer_shape(layer_name)
    entries = manifest.entries
    root = Path(manifest.root)
    rows = []
    with torch.no_grad():
        for start in range(0, len(entries), batch):
            chunk = entries[start : start + batch]
            images = np.stack([load_image(root / e.path) for e in chunk])
            t = model.net.forward_to_layer(model.to_input(images), layer_name)
            rows.append(t.permute(0, 2, 3, 1).reshape(len(chunk), -1).numpy().astype(np.float32))
    X = np.concatenate(rows) if rows else np.zeros((0, int(np.prod(shape))), np.float32)
    y = np.array([manifest.class_index(e.class_label) for e in entries], dtype=np.int64)
    return FeatureTable(
        X,
        y,
        layer_name,
        shape,
        list(manifest.classes),
        [e.path for e in entries],
        [e.split for e in entries],
    )


def dead_channel_report(
    model: TrainedModel, manifest: DatasetManifest, layer_name: str, threshold: float
) -> list[tuple[int, float]]:
    """Channels whose max activation over all images and positions is < threshold."""
    entries = manifest.entries
    root = Path(manifest.root)
    peak = None
    batch = 64
    with torch.no_grad():
        for start in range(0, len(entries), batch):
            chunk = entries[start : start + batch]
            images = np.stack([load_image(root / e.path) for e in chunk])
            t = model.net.forward_to_layer(model.to_input(images), layer_name)
            m = t.amax(dim=(0, 2, 3)).numpy()
            peak = m if peak is None else np.maximum(peak, m)
    if peak is None:
        raise EmptySplit("manifest has no entries")
    return [(int(c), float(peak[c])) for c in range(len(peak)) if peak[c] < threshold]


def save_checkpoint(model: TrainedModel, ckpt_dir) -> None:
    ckpt = Path(ckpt_dir)
    ckpt.mkdir(parents=True, exist_ok=True)
    doc = {
        "preset": model.config.preset,
        "seed": model.config.seed,
        "input_size": list(model.config.input_size),
        "class_order": model.class_order,
        "norm_mean": model.norm_mean.tolist(),
        "norm_std": model.norm_std.tolist(),
        "train_metrics": model.train_metrics,
    }
    with open(ckpt / "config.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    torch.save(model.net.state_dict(), ckpt / "weights.pt")


def load_checkpoint(ckpt_dir) -> TrainedModel:
    ckpt = Path(ckpt_dir)
    with open(ckpt / "config.json") as f:
        doc = json.load(f)
    config = make_config(doc["preset"], seed=doc["seed"], input_size=tuple(doc["input_size"]))
    model = build_model(config, len(doc["class_order"]))
    model.net.load_state_dict(torch.load(ckpt / "weights.pt", weights_only=True))
    model.net.eval()
    model.class_order = list(doc["class_order"])
    model.norm_mean = np.array(doc["norm_mean"])
    model.norm_std = np.array(doc["norm_std"])
    model.train_metrics = doc.get("train_metrics", {})
    return model
