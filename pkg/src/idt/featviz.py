"""Activation maximization by gradient ascent.

The objective for a channel is its mean activation over all spatial positions
of the chosen layer. Starting from low-contrast noise around mid-grey, each
step moves along the normalized gradient of the objective (optionally minus
small total-variation and L2 penalties, with a seeded pixel jitter), and the
step is halved until the raw objective does not decrease. With the penalty
weights at zero that backtracking makes the objective sequence literally
non-decreasing, which the tests assert.

Channels whose objective never leaves the noise floor are flagged dead; their
output stays the near-uniform grey initialization.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from .errors import MissingVisualization, OutOfRange
from .model import TrainedModel

_EPS_GRAD = 1e-12
_MAX_HALVINGS = 8


@dataclass(frozen=True)
class VizParams:
    steps: int = 256
    step_size: float = 0.1
    seed: int = 0
    jitter_pixels: int = 2
    tv_weight: float = 1e-3
    l2_weight: float = 1e-4
    dead_threshold: float = 1e-4

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")


@dataclass
class FeatureImage:
    pixels: np.ndarray  # (H, W, 3) float in [0, 1]
    layer_name: str
    channel: int
    objective_initial: float
    objective_final: float
    dead: bool
    params: VizParams = field(default_factory=VizParams)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    def save(self, png_path) -> None:
        png_path = Path(png_path)
        Image.fromarray(self.to_uint8()).save(png_path)
        meta = {
            "layer": self.layer_name,
            "channel": self.channel,
            "objective_initial": self.objective_initial,
            "objective_final": self.objective_final,
            "dead": self.dead,
            "params": asdict(self.params),
        }
        with open(png_path.with_suffix(".json"), "w") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, png_path) -> "FeatureImage":
        png_path = Path(png_path)
        with Image.open(png_path) as im:
            pixels = np.asarray(im.convert("RGB")).astype(np.float64) / 255.0
        with open(png_path.with_suffix(".json")) as f:
            meta = json.load(f)
        return cls(
            pixels=pixels,
            layer_name=meta["layer"],
            channel=meta["channel"],
            objective_initial=meta["objective_initial"],
            objective_final=meta["objective_final"],
            dead=meta["dead"],
            params=VizParams(**meta["params"]),
        )


def _check_channel(model: TrainedModel, layer_name: str, channel: int) -> tuple[int, int, int]:
    shape = model.layer_shape(layer_name)  # raises UnknownLayer
    if not (0 <= channel < shape[2]):
        raise OutOfRange(f"channel {channel} outside layer {layer_name} with {shape[2]} channels")
    return shape


def _pixels_to_tensor(model: TrainedModel, image: np.ndarray) -> torch.Tensor:
    image = np.asarray(image)
    scale = 255.0 if image.dtype == np.uint8 else 1.0
    dtype = next(model.net.parameters()).dtype
    x = torch.from_numpy(image.astype(np.float64) / scale).to(dtype)
    return x.permute(2, 0, 1).unsqueeze(0)


def _objective_at(model: TrainedModel, px: torch.Tensor, layer_name: str, channel: int) -> torch.Tensor:
    fmap = model.net.forward_to_layer(model.normalize(px), layer_name)
    return fmap[0, channel].mean()


def channel_objective(model: TrainedModel, image: np.ndarray, layer_name: str, channel: int) -> float:
    """Mean activation of one channel over all positions, for a [0,1] pixel image."""
    _check_channel(model, layer_name, channel)
    with torch.no_grad():
        return float(_objective_at(model, _pixels_to_tensor(model, image), layer_name, channel))


def channel_objective_grad(
    model: TrainedModel, image: np.ndarray, layer_name: str, channel: int
) -> np.ndarray:
    """Gradient of channel_objective with respect to the pixel image."""
    _check_channel(model, layer_name, channel)
    px = _pixels_to_tensor(model, image).requires_grad_(True)
    obj = _objective_at(model, px, layer_name, channel)
    (grad,) = torch.autograd.grad(obj, px)
    return grad[0].permute(1, 2, 0).numpy().astype(np.float64)


def _tv_penalty(px: torch.Tensor) -> torch.Tensor:
    dr = px[:, :, 1:, :] - px[:, :, :-1, :]
    dc = px[:, :, :, 1:] - px[:, :, :, :-1]
    return (dr**2).sum() + (dc**2).sum()


def visualize_feature(
    model: TrainedModel, layer_name: str, channel: int, params: VizParams = VizParams()
) -> FeatureImage:
    """Synthesize the image maximizing one channel's mean activation."""
    _check_channel(model, layer_name, channel)
    h, w = model.config.input_size
    rng = np.random.default_rng(params.seed)
    init = rng.uniform(0.45, 0.55, size=(h, w, 3))
    px = _pixels_to_tensor(model, init)
    dtype = px.dtype

    def raw_objective(p: torch.Tensor) -> float:
        with torch.no_grad():
            return float(_objective_at(model, p, layer_name, channel))

    objective_initial = raw_objective(px)
    current = objective_initial
    step = params.step_size
    for _ in range(params.steps):
        if params.jitter_pixels > 0:
            dr = int(rng.integers(-params.jitter_pixels, params.jitter_pixels + 1))
            dc = int(rng.integers(-params.jitter_pixels, params.jitter_pixels + 1))
        else:
            dr = dc = 0
        x = px.clone().requires_grad_(True)
        score = _objective_at(model, torch.roll(x, (dr, dc), dims=(2, 3)), layer_name, channel)
        if params.tv_weight > 0:
            score = score - params.tv_weight * _tv_penalty(x)
        if params.l2_weight > 0:
            score = score - params.l2_weight * ((x - 0.5) ** 2).sum()
        (grad,) = torch.autograd.grad(score, x)
        gnorm = float(grad.norm())
        if gnorm < _EPS_GRAD:
            break
        direction = grad / gnorm
        alpha = step
        for _half in range(_MAX_HALVINGS):
            proposal = torch.clamp(px + alpha * direction, 0.0, 1.0)
            value = raw_objective(proposal)
            if value >= current:
                px = proposal
                current = value
                break
            alpha /= 2.0

    pixels = px[0].permute(1, 2, 0).numpy().astype(np.float64)
    objective_final = current
    return FeatureImage(
        pixels=np.clip(pixels, 0.0, 1.0),
        layer_name=layer_name,
        channel=channel,
        objective_initial=objective_initial,
        objective_final=objective_final,
        dead=objective_final < params.dead_threshold,
        params=params,
    )


def _tile_image(fi: FeatureImage, tile: int, label: str) -> np.ndarray:
    if fi.dead:
        img = Image.new("RGB", (tile, tile), (128, 128, 128))
        draw = ImageDraw.Draw(img)
        draw.line([(4, 4), (14, 14)], fill=(220, 70, 70), width=2)
        draw.line([(4, 14), (14, 4)], fill=(220, 70, 70), width=2)
    else:
        img = Image.fromarray(fi.to_uint8()).resize((tile, tile), Image.BILINEAR)
        draw = ImageDraw.Draw(img)
    draw.text((3, tile - 12), label, fill=(255, 255, 0))
    return np.asarray(img)


def visualize_layer_grid(
    model: TrainedModel,
    layer_name: str,
    channels: list[int],
    params: VizParams = VizParams(),
    columns: int = 6,
    tile: int = 100,
) -> tuple[np.ndarray, list[FeatureImage]]:
    """Row-major grid of channel visualizations, channel number on each tile."""
    if not channels:
        raise ValueError("channels list is empty")
    images = [visualize_feature(model, layer_name, ch, params) for ch in channels]
    cols = min(columns, len(channels))
    rows = (len(channels) + cols - 1) // cols
    pad = 2
    grid = np.full((rows * (tile + pad) - pad, cols * (tile + pad) - pad, 3), 24, dtype=np.uint8)
    for i, fi in enumerate(images):
        r, c = divmod(i, cols)
        tile_px = _tile_image(fi, tile, str(fi.channel))
        grid[r * (tile + pad) : r * (tile + pad) + tile, c * (tile + pad) : c * (tile + pad) + tile] = tile_px
    return grid, images


class VizCache:
    """Per-(layer, channel) store of FeatureImages, optionally directory-backed."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[tuple[str, int], FeatureImage] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _png_path(self, layer_name: str, channel: int) -> Path:
        return self.directory / f"{layer_name}_{channel}.png"

    def get(self, layer_name: str, channel: int) -> FeatureImage:
        key = (layer_name, int(channel))
        if key in self._mem:
            return self._mem[key]
        if self.directory is not None:
            path = self._png_path(layer_name, channel)
            if path.exists():
                fi = FeatureImage.load(path)
                self._mem[key] = fi
                return fi
        raise MissingVisualization(f"no visualization cached for {layer_name} channel {channel}")

    def __contains__(self, key: tuple[str, int]) -> bool:
        try:
            self.get(*key)
            return True
        except MissingVisualization:
            return False

    def put(self, fi: FeatureImage) -> None:
        self._mem[(fi.layer_name, fi.channel)] = fi
        if self.directory is not None:
            self.save_png(fi)

    def save_png(self, fi: FeatureImage) -> Path:
        path = self._png_path(fi.layer_name, fi.channel)
        fi.save(path)
        return path

    def get_or_create(
        self, model: TrainedModel, layer_name: str, channel: int, params: VizParams
    ) -> FeatureImage:
        try:
            return self.get(layer_name, channel)
        except MissingVisualization:
            fi = visualize_feature(model, layer_name, channel, params)
            self.put(fi)
            return fi
