"""Feature naming and the flattened feature table.

A spatial feature of a conv layer is addressed as (row, col, channel) and
written ``row_col_channel``, e.g. ``6_5_9`` is channel 9 at location (6, 5).
Flattened vectors are row-major with the channel index fastest, so the
bijection between names and vector positions is

    index = row * W * C + col * C + channel

for a layer of shape (H, W, C). Everything downstream (tree features, the
explorer API, serialized trees) relies on this one mapping.
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import BadFeatureName, OutOfRange

_NAME_RE = re.compile(r"^(\d+)_(\d+)_(\d+)$")


@dataclass(frozen=True)
class FeatureId:
    row: int
    col: int
    channel: int

    @property
    def name(self) -> str:
        return f"{self.row}_{self.col}_{self.channel}"


def parse_feature_name(s: str) -> FeatureId:
    """Parse ``"6_5_9"`` into FeatureId(row=6, col=5, channel=9)."""
    m = _NAME_RE.match(s)
    if not m:
        raise BadFeatureName(f"not a row_col_channel feature name: {s!r}")
    return FeatureId(int(m.group(1)), int(m.group(2)), int(m.group(3)))


def feature_index(fid: FeatureId, layer_shape: tuple[int, int, int]) -> int:
    h, w, c = layer_shape
    if not (0 <= fid.row < h and 0 <= fid.col < w and 0 <= fid.channel < c):
        raise OutOfRange(f"{fid.name} outside layer shape {layer_shape}")
    return fid.row * w * c + fid.col * c + fid.channel


def feature_id_of(index: int, layer_shape: tuple[int, int, int]) -> FeatureId:
    h, w, c = layer_shape
    if not (0 <= index < h * w * c):
        raise OutOfRange(f"index {index} outside layer shape {layer_shape}")
    row, rest = divmod(index, w * c)
    col, channel = divmod(rest, c)
    return FeatureId(row, col, channel)


class FeatureTable:
    """Dense matrix of flattened layer activations plus per-row labels.

    Column i corresponds to feature_id_of(i, layer_shape). Rows keep their
    source path and train/test split so trees can be fit on one split and
    scored on the other.
    """

    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        layer_name: str,
        layer_shape: tuple[int, int, int],
        class_order: list[str],
        paths: list[str] | None = None,
        splits: list[str] | None = None,
    ):
        h, w, c = layer_shape
        if X.ndim != 2 or X.shape[1] != h * w * c:
            raise ValueError(f"X width {X.shape} does not match layer shape {layer_shape}")
        if len(y) != len(X):
            raise ValueError("X and y row counts differ")
        self.X = np.asarray(X, dtype=np.float32)
        self.y = np.asarray(y, dtype=np.int64)
        self.layer_name = layer_name
        self.layer_shape = (int(h), int(w), int(c))
        self.class_order = list(class_order)
        self.paths = list(paths) if paths is not None else [""] * len(X)
        self.splits = list(splits) if splits is not None else ["train"] * len(X)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_order)

    def subset(self, split: str) -> "FeatureTable":
        idx = [i for i, s in enumerate(self.splits) if s == split]
        return FeatureTable(
            self.X[idx],
            self.y[idx],
            self.layer_name,
            self.layer_shape,
            self.class_order,
            [self.paths[i] for i in idx],
            [self.splits[i] for i in idx],
        )

    def save(self, path) -> None:
        header = {
            "layer_name": self.layer_name,
            "layer_shape": list(self.layer_shape),
            "class_order": self.class_order,
        }
        with open(path, "wb") as f:
            np.savez(
                f,
                header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
                X=self.X,
                y=self.y,
                paths=np.array(self.paths, dtype=object),
                splits=np.array(self.splits, dtype=object),
            )

    @classmethod
    def load(cls, path) -> "FeatureTable":
        with open(path, "rb") as f:
            data = np.load(io.BytesIO(f.read()), allow_pickle=True)
        header = json.loads(bytes(data["header"]).decode())
        return cls(
            data["X"],
            data["y"],
            header["layer_name"],
            tuple(header["layer_shape"]),
            header["class_order"],
            list(data["paths"]),
            list(data["splits"]),
        )
