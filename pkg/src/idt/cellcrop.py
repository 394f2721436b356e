"""Cell extraction and synthetic datasets.

Stained cells are found by a hue/saturation mask: pixels whose hue falls in a
configurable band (default spans the blue-through-pink stain range) and whose
saturation clears a floor. The largest 8-connected blob of mask pixels wins,
its bounding box is expanded to a square about its center, and the square is
resampled bilinearly to a fixed 100x100 crop with edge replication where the
square sticks out of the frame.

The synthetic generator paints one saturated elliptical blob per image on a
pale noisy background (plus a few low-saturation distractors that stay below
the mask's saturation floor), so the same detector works on generated data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import EmptyClass, NoCellFound

CROP_SIZE = 100
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class ColorDetectParams:
    hue_lo: float = 0.55
    hue_hi: float = 0.97
    sat_min: float = 0.25
    val_min: float = 0.0
    min_area: int = 400


@dataclass(frozen=True)
class BBox:
    """Half-open pixel box: rows [row_min, row_max), cols [col_min, col_max)."""

    row_min: int
    col_min: int
    row_max: int
    col_max: int

    def __post_init__(self):
        if not (self.row_min < self.row_max and self.col_min < self.col_max):
            raise ValueError(f"degenerate bbox {self}")

    @property
    def height(self) -> int:
        return self.row_max - self.row_min

    @property
    def width(self) -> int:
        return self.col_max - self.col_min


@dataclass
class RawImage:
    pixels: np.ndarray  # (H, W, 3) uint8
    source_path: str = ""
    class_label: str = ""


@dataclass
class CellImage:
    pixels: np.ndarray  # (100, 100, 3) uint8
    class_label: str = ""
    source_path: str = ""


def rgb_to_hsv(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB [0,255] to (h, s, v) arrays, each in [0, 1]."""
    arr = pixels.astype(np.float64) / 255.0
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    mx = arr.max(axis=-1)
    mn = arr.min(axis=-1)
    diff = mx - mn
    safe = np.where(diff == 0, 1.0, diff)
    h = np.zeros_like(mx)
    is_r = (mx == r) & (diff > 0)
    is_g = (mx == g) & (diff > 0) & ~is_r
    is_b = (diff > 0) & ~is_r & ~is_g
    h[is_r] = ((g - b)[is_r] / safe[is_r]) % 6.0
    h[is_g] = (b - r)[is_g] / safe[is_g] + 2.0
    h[is_b] = (r - g)[is_b] / safe[is_b] + 4.0
    h = h / 6.0
    s = np.where(mx == 0, 0.0, diff / np.where(mx == 0, 1.0, mx))
    return h, s, mx


def color_mask(pixels: np.ndarray, params: ColorDetectParams) -> np.ndarray:
    """Boolean mask of pixels inside the hue band with enough saturation."""
    h, s, v = rgb_to_hsv(pixels)
    if params.hue_lo <= params.hue_hi:
        in_band = (h >= params.hue_lo) & (h <= params.hue_hi)
    else:  # band wraps through 1.0
        in_band = (h >= params.hue_lo) | (h <= params.hue_hi)
    return in_band & (s >= params.sat_min) & (v >= params.val_min)


def detect_cell_region(image: RawImage, params: ColorDetectParams = ColorDetectParams()) -> BBox:
    """Bounding box of the largest connected blob of mask pixels."""
    pixels = image.pixels
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got {pixels.shape}")
    mask = color_mask(pixels, params)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        raise NoCellFound(f"color mask empty for {image.source_path or 'image'}")
    sizes = np.bincount(labels.reshape(-1))[1:]
    biggest = int(np.argmax(sizes)) + 1  # ties resolve to the lowest label
    if sizes[biggest - 1] < params.min_area:
        raise NoCellFound(
            f"largest blob has {int(sizes[biggest - 1])} px < min_area {params.min_area}"
        )
    rows, cols = np.nonzero(labels == biggest)
    return BBox(int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1)


def extract_cell(image: RawImage, bbox: BBox) -> CellImage:
    """Square crop around the bbox center, resampled to 100x100.

    The square's side is max(bbox height, width); parts outside the frame are
    filled by edge replication via clamped bilinear sampling. When the bbox is
    already exactly 100x100 the output is a pixel-identical copy.
    """
    pixels = image.pixels
    h, w = pixels.shape[:2]
    side = float(max(bbox.height, bbox.width))
    cr = (bbox.row_min + bbox.row_max) / 2.0
    cc = (bbox.col_min + bbox.col_max) / 2.0
    r0 = cr - side / 2.0
    c0 = cc - side / 2.0

    out = np.arange(CROP_SIZE, dtype=np.float64)
    src_r = r0 + (out + 0.5) * side / CROP_SIZE - 0.5
    src_c = c0 + (out + 0.5) * side / CROP_SIZE - 0.5

    rf = np.clip(np.floor(src_r), 0, h - 1).astype(int)
    cf = np.clip(np.floor(src_c), 0, w - 1).astype(int)
    rc = np.minimum(rf + 1, h - 1)
    cc2 = np.minimum(cf + 1, w - 1)
    ar = np.clip(src_r - np.floor(src_r), 0.0, 1.0)
    ac = np.clip(src_c - np.floor(src_c), 0.0, 1.0)
    # clamp sample coordinates that fall left of the frame onto pixel 0
    ar = np.where(src_r < 0, 0.0, ar)
    ac = np.where(src_c < 0, 0.0, ac)

    img = pixels.astype(np.float64)
    top = img[rf][:, cf] * (1 - ac)[None, :, None] + img[rf][:, cc2] * ac[None, :, None]
    bot = img[rc][:, cf] * (1 - ac)[None, :, None] + img[rc][:, cc2] * ac[None, :, None]
    res = top * (1 - ar)[:, None, None] + bot * ar[:, None, None]
    return CellImage(
        pixels=np.clip(np.rint(res), 0, 255).astype(np.uint8),
        class_label=image.class_label,
        source_path=image.source_path,
    )


@dataclass
class ManifestEntry:
    path: str
    class_label: str
    split: str  # "train" | "test"


@dataclass
class DatasetManifest:
    root: str
    classes: list[str]
    entries: list[ManifestEntry]
    seed: int

    def paths(self, split: str | None = None) -> list[str]:
        return [e.path for e in self.entries if split is None or e.split == split]

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def class_index(self, label: str) -> int:
        return self.classes.index(label)

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "classes": self.classes,
            "seed": self.seed,
            "entries": [{"path": e.path, "class": e.class_label, "split": e.split} for e in self.entries],
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as f:
            doc = json.load(f)
        return cls(
            root=doc["root"],
            classes=list(doc["classes"]),
            entries=[ManifestEntry(e["path"], e["class"], e["split"]) for e in doc["entries"]],
            seed=doc["seed"],
        )


def build_manifest(dataset_root, split_fraction: float, seed: int) -> DatasetManifest:
    """Stratified train/test manifest over <root>/<class>/*.{png,jpg} files.

    Classes are sorted lexicographically (this order defines label indices
    everywhere downstream) and the per-class shuffle is a pure function of
    the directory listing and the seed.
    """
    root = Path(dataset_root)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise EmptyClass(f"no class directories under {root}")
    classes = [p.name for p in class_dirs]
    entries: list[ManifestEntry] = []
    for ci, cdir in enumerate(class_dirs):
        files = sorted(
            str(p.relative_to(root)) for p in cdir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not files:
            raise EmptyClass(f"class directory {cdir} has no images")
        rng = np.random.default_rng(np.random.SeedSequence([seed, ci]))
        order = rng.permutation(len(files))
        n_train = int(round(split_fraction * len(files)))
        for rank, idx in enumerate(order):
            split = "train" if rank < n_train else "test"
            entries.append(ManifestEntry(files[idx], classes[ci], split))
    entries.sort(key=lambda e: e.path)
    return DatasetManifest(root=str(root), classes=classes, entries=entries, seed=seed)


@dataclass(frozen=True)
class BlobClassSpec:
    hue: float
    hue_jitter: float = 0.02
    sat_range: tuple[float, float] = (0.6, 0.9)
    val_range: tuple[float, float] = (0.55, 0.85)
    radius_range: tuple[float, float] = (22.0, 40.0)
    noise: float = 0.02


@dataclass(frozen=True)
class SynthSpec:
    classes: dict[str, BlobClassSpec]
    n_per_class: int = 200
    image_size: int = 200
    split_fraction: float = 0.8
    distractors: int = 4  # pale low-saturation blobs the detector must ignore

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("synthetic spec needs at least 2 classes")
        if self.image_size < 150:
            raise ValueError("synthetic images must be at least 150x150")


def _hsv_to_rgb_scalar(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb)


def _paint_blob(img: np.ndarray, rng: np.random.Generator, cx, cy, rx, ry, theta, rgb, noise):
    size = img.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    xr = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    yr = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
    inside = (xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0
    texture = rng.normal(0.0, noise, size=(size, size, 3))
    img[inside] = np.clip(rgb[None, :] + texture[inside], 0.0, 1.0)


def synth_image(spec: SynthSpec, blob: BlobClassSpec, rng: np.random.Generator) -> np.ndarray:
    size = spec.image_size
    base = rng.normal(0.92, 0.015, size=(size, size, 3))
    img = np.clip(base, 0.0, 1.0)

    # distractor cells: saturation kept well under the default mask floor
    for _ in range(spec.distractors):
        r = rng.uniform(8, 16)
        cx, cy = rng.uniform(r, size - r, size=2)
        hue = rng.uniform(0.93, 0.99)
        rgb = _hsv_to_rgb_scalar(hue, rng.uniform(0.05, 0.15), rng.uniform(0.75, 0.9))
        _paint_blob(img, rng, cx, cy, r, r * rng.uniform(0.8, 1.0), rng.uniform(0, np.pi), rgb, 0.01)

    rx = rng.uniform(*blob.radius_range)
    ry = rng.uniform(*blob.radius_range)
    margin = max(rx, ry) + 2
    cx, cy = rng.uniform(margin, size - margin, size=2)
    hue = (blob.hue + rng.uniform(-blob.hue_jitter, blob.hue_jitter)) % 1.0
    rgb = _hsv_to_rgb_scalar(hue, rng.uniform(*blob.sat_range), rng.uniform(*blob.val_range))
    _paint_blob(img, rng, cx, cy, rx, ry, rng.uniform(0, np.pi), rgb, blob.noise)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def synth_dataset(spec: SynthSpec, out_dir, seed: int) -> DatasetManifest:
    """Write n_per_class blob images per class and return their manifest."""
    out = Path(out_dir)
    for ci, (name, blob) in enumerate(sorted(spec.classes.items())):
        cdir = out / name
        cdir.mkdir(parents=True, exist_ok=True)
        for i in range(spec.n_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, ci, i]))
            img = synth_image(spec, blob, rng)
            Image.fromarray(img).save(cdir / f"{name}_{i:04d}.png")
    return build_manifest(out, spec.split_fraction, seed)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def extract_dataset(
    in_root,
    out_root,
    split_fraction: float,
    seed: int,
    params: ColorDetectParams = ColorDetectParams(),
) -> DatasetManifest:
    """Detect and crop every image under in_root, mirroring the class layout."""
    in_root = Path(in_root)
    out_root = Path(out_root)
    manifest = build_manifest(in_root, split_fraction, seed)
    skipped = 0
    kept: list[ManifestEntry] = []
    for entry in manifest.entries:
        raw = RawImage(
            pixels=load_image(in_root / entry.path),
            source_path=entry.path,
            class_label=entry.class_label,
        )
        try:
            bbox = detect_cell_region(raw, params)
        except NoCellFound:
            skipped += 1
            continue
        cell = extract_cell(raw, bbox)
        dest = out_root / entry.class_label / (Path(entry.path).stem + ".png")
        dest.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(cell.pixels).save(dest)
        kept.append(ManifestEntry(str(dest.relative_to(out_root)), entry.class_label, entry.split))
    if skipped:
        print(f"extract: no cell found in {skipped} image(s), skipped")
    result = DatasetManifest(root=str(out_root), classes=manifest.classes, entries=kept, seed=seed)
    result.save(out_root / "manifest.json")
    return result
