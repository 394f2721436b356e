"""Best-channel maps: which channel wins at each position of a layer.

The mosaic renderer mirrors the layer's spatial topology: one slot per map
cell, showing the winning channel's visualization. Tile side length grows
linearly with activation between the map's min and max, floored so that
zero-activation cells still render as small dots, and each slot is labeled
with its channel number at the bottom left.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .errors import MissingVisualization
from .featviz import VizCache


@dataclass
class BestChannelMap:
    layer_name: str
    channels: np.ndarray  # (H, W) int
    activations: np.ndarray  # (H, W) float, >= 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels.shape

    def to_dict(self) -> dict:
        h, w = self.channels.shape
        cells = [
            [int(self.channels[r, c]), float(self.activations[r, c])]
            for r in range(h)
            for c in range(w)
        ]
        return {"layer": self.layer_name, "H": h, "W": w, "cells": cells}

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "BestChannelMap":
        h, w = doc["H"], doc["W"]
        channels = np.zeros((h, w), dtype=np.int64)
        acts = np.zeros((h, w), dtype=np.float64)
        for i, (ch, a) in enumerate(doc["cells"]):
            channels[i // w, i % w] = ch
            acts[i // w, i % w] = a
        return cls(doc["layer"], channels, acts)


def best_channel_map(featmap: np.ndarray, layer_name: str = "") -> BestChannelMap:
    """Argmax channel at each (row, col); ties break to the lowest channel."""
    featmap = np.asarray(featmap)
    if featmap.ndim != 3:
        raise ValueError(f"expected (H, W, C) feature map, got {featmap.shape}")
    channels = np.argmax(featmap, axis=2)
    activations = np.take_along_axis(featmap, channels[:, :, None], axis=2)[:, :, 0]
    return BestChannelMap(layer_name, channels.astype(np.int64), activations.astype(np.float64))


@dataclass(frozen=True)
class MosaicStyle:
    slot: int = 64
    min_tile_fraction: float = 0.15
    label: bool = True
    background: np.ndarray | None = None  # source image to blend underneath
    background_opacity: float = 0.0


def tile_side(activation: float, lo: float, hi: float, style: MosaicStyle) -> int:
    """Slot-pixel side length for one cell; linear in activation, floored."""
    if hi > lo:
        frac = style.min_tile_fraction + (1.0 - style.min_tile_fraction) * (activation - lo) / (hi - lo)
    else:
        frac = 1.0
    return max(2, int(round(style.slot * frac)))


def render_best_channel_image(
    bmap: BestChannelMap, viz_cache: VizCache, style: MosaicStyle = MosaicStyle()
) -> np.ndarray:
    """H x W mosaic of activation-scaled visualization tiles, as uint8 RGB."""
    h, w = bmap.shape
    slot = style.slot
    canvas = Image.new("RGB", (w * slot, h * slot), (16, 16, 16))
    if style.background is not None and style.background_opacity > 0:
        bg = Image.fromarray(np.asarray(style.background, dtype=np.uint8)).resize(
            (w * slot, h * slot), Image.BILINEAR
        )
        canvas = Image.blend(canvas, bg, style.background_opacity)

    lo = float(bmap.activations.min())
    hi = float(bmap.activations.max())
    draw = ImageDraw.Draw(canvas)
    for r in range(h):
        for c in range(w):
            ch = int(bmap.channels[r, c])
            try:
                fi = viz_cache.get(bmap.layer_name, ch)
            except KeyError as e:
                raise MissingVisualization(
                    f"mosaic needs channel {ch} of layer {bmap.layer_name!r}"
                ) from e
            side = tile_side(float(bmap.activations[r, c]), lo, hi, style)
            tile = Image.fromarray(fi.to_uint8()).resize((side, side), Image.BILINEAR)
            x0 = c * slot + (slot - side) // 2
            y0 = r * slot + (slot - side) // 2
            canvas.paste(tile, (x0, y0))
            if style.label:
                draw.text((c * slot + 2, (r + 1) * slot - 12), str(ch), fill=(255, 255, 0))
    return np.asarray(canvas)
