import numpy as np
import pytest
from PIL import Image

from idt.cellcrop import BlobClassSpec, DatasetManifest, ManifestEntry, SynthSpec, synth_dataset
from idt.features import FeatureTable
from idt.model import ConvBlockSpec, ModelConfig, TrainedModel, build_model


def make_tiny_model(seed: int = 0, input_size=(8, 8), pool=False, channels=(4, 6), double=True) -> TrainedModel:
    """Small random conv net for gradient and objective tests."""
    blocks = [ConvBlockSpec(channels[0], 3, 1, pool=False)]
    for ch in channels[1:]:
        blocks.append(ConvBlockSpec(ch, 3, 1, pool=pool))
    config = ModelConfig(
        preset="custom",
        blocks=tuple(blocks),
        layer_names=tuple(str(i + 1) for i in range(len(blocks))),
        feature_layer=str(len(blocks)),
        input_size=input_size,
        seed=seed,
    )
    model = build_model(config, 2)
    if double:
        model.net.double()
    return model


def make_image_manifest(root, n_per_class, size=8, n_classes=2, seed=0) -> DatasetManifest:
    """Random tiny images on disk plus a manifest splitting 50/50."""
    rng = np.random.default_rng(seed)
    entries = []
    classes = [f"c{i}" for i in range(n_classes)]
    for ci, cls in enumerate(classes):
        d = root / cls
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            img = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
            Image.fromarray(img).save(d / f"{i:03d}.png")
            split = "train" if i < n_per_class // 2 else "test"
            entries.append(ManifestEntry(f"{cls}/{i:03d}.png", cls, split))
    return DatasetManifest(root=str(root), classes=classes, entries=entries, seed=seed)


def random_table(rng: np.random.Generator, n, d, k) -> FeatureTable:
    X = rng.uniform(0.0, 1.0, size=(n, d))
    y = rng.integers(0, k, size=n)
    if len(np.unique(y)) < 2:  # force two labels so splits exist
        y[0] = 0
        y[-1] = 1 % k if k > 1 else 0
    return FeatureTable(X, y, "t", (1, 1, d), [f"c{i}" for i in range(k)])


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """Tiny 2-class blob dataset: quick to generate, detectable by default params."""
    out = tmp_path_factory.mktemp("synthdata")
    spec = SynthSpec(
        classes={
            "blueblob": BlobClassSpec(hue=0.60),
            "pinkblob": BlobClassSpec(hue=0.92),
        },
        n_per_class=12,
        image_size=160,
        split_fraction=0.75,
    )
    manifest = synth_dataset(spec, out, seed=7)
    return manifest
