"""CART decision trees over flattened feature vectors.

Split orientation is the opposite of the common library convention and is
pinned by tests: a sample whose feature value is strictly GREATER than the
node threshold takes the LEFT branch. Candidate thresholds are midpoints of
consecutive distinct sorted values; ties between equally good splits resolve
to the lowest feature index, then the lowest threshold, so fitting is fully
deterministic.

Feature exclusion lists let a modeler remove a biased feature and refit
without touching the upstream model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch, EmptyNode, EmptyTable
from .features import FeatureTable, feature_id_of, feature_index, parse_feature_name

_CHUNK = 512  # feature columns scanned per vectorized block


def gini(counts) -> float:
    """Gini impurity 1 - sum((c/n)^2) of a class-count vector."""
    total = 0
    for c in counts:
        total += int(c)
    if total == 0:
        raise EmptyNode("impurity of an empty node")
    acc = 0.0
    for c in counts:
        p = int(c) / total
        acc += p * p
    return 1.0 - acc


def entropy(counts) -> float:
    """Shannon entropy in bits of a class-count vector."""
    total = sum(int(c) for c in counts)
    if total == 0:
        raise EmptyNode("impurity of an empty node")
    acc = 0.0
    for c in counts:
        if c > 0:
            p = int(c) / total
            acc -= p * np.log2(p)
    return float(acc)


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 4
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    excluded_features: frozenset[int] = field(default_factory=frozenset)
    criterion: str = "gini"
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        object.__setattr__(self, "excluded_features", frozenset(int(i) for i in self.excluded_features))


class Split(NamedTuple):
    feature: int
    threshold: float
    decrease: float


@dataclass
class TreeNode:
    id: int
    histogram: list[int]
    predicted_class: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class DecisionTree:
    nodes: list[TreeNode]
    n_features: int
    class_order: list[str]
    layer_shape: tuple[int, int, int]
    params: TreeParams

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def internal_nodes(self) -> list[TreeNode]:
        return [n for n in self.nodes if not n.is_leaf]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.is_leaf]

    def feature_indices(self) -> set[int]:
        return {n.feature for n in self.nodes if not n.is_leaf}

    def depth(self) -> int:
        def walk(nid, d):
            node = self.nodes[nid]
            if node.is_leaf:
                return d
            return max(walk(node.left, d + 1), walk(node.right, d + 1))

        return walk(0, 0)


def _impurity(counts_row, criterion: str) -> float:
    return gini(counts_row) if criterion == "gini" else entropy(counts_row)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    excluded: Iterable[int] = (),
    min_samples_leaf: int = 1,
    criterion: str = "gini",
) -> Optional[Split]:
    """Exhaustive best split by impurity decrease.

    Returns None (no split) only when no valid candidate exists: every
    usable feature is constant, excluded, or blocked by min_samples_leaf.
    A zero-decrease candidate is still taken (the classic XOR case: the
    first cut gains nothing by itself but unlocks the layer below).

    LEFT child receives samples with value > threshold. The scan runs in
    float64 regardless of the table's storage dtype so thresholds agree
    bit-for-bit with a scalar re-computation.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n < 2:
        return None
    parent_counts = np.bincount(y, minlength=n_classes)
    parent = _impurity(parent_counts, criterion)
    excluded = frozenset(int(i) for i in excluded)

    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), y] = 1.0

    best: Optional[Split] = None
    for start in range(0, d, _CHUNK):
        stop = min(start + _CHUNK, d)
        cols = X[:, start:stop]
        m = stop - start
        order = np.argsort(cols, axis=0, kind="stable")
        sv = np.take_along_axis(cols, order, axis=0)
        sy = y[order]  # (n, m)

        # counts_below[i, j, k]: samples of class k among the i+1 smallest of column j
        counts_below = np.cumsum(onehot[order.reshape(-1)].reshape(n, m, n_classes), axis=0)
        total = counts_below[-1]  # (m, n_classes)

        i = np.arange(n - 1)
        n_right = (i + 1).astype(np.float64)[:, None]  # values <= threshold
        n_left = n - n_right  # values > threshold
        right_counts = counts_below[:-1]  # (n-1, m, n_classes)
        left_counts = total[None, :, :] - right_counts

        if criterion == "gini":
            g_left = 1.0 - np.sum((left_counts / n_left[:, :, None]) ** 2, axis=2)
            g_right = 1.0 - np.sum((right_counts / n_right[:, :, None]) ** 2, axis=2)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                pl = left_counts / n_left[:, :, None]
                pr = right_counts / n_right[:, :, None]
                g_left = -np.sum(np.where(pl > 0, pl * np.log2(pl, where=pl > 0), 0.0), axis=2)
                g_right = -np.sum(np.where(pr > 0, pr * np.log2(pr, where=pr > 0), 0.0), axis=2)

        child = (n_left * g_left + n_right * g_right) / n
        gains = parent - child  # (n-1, m)

        valid = sv[:-1] != sv[1:]
        if min_samples_leaf > 1:
            valid = valid & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        gains = np.where(valid, gains, -np.inf)
        for j in range(m):
            if start + j in excluded:
                gains[:, j] = -np.inf

        col_best_i = np.argmax(gains, axis=0)  # first max -> lowest threshold
        col_best = gains[col_best_i, np.arange(m)]
        j = int(np.argmax(col_best))  # first max -> lowest feature index
        if np.isfinite(col_best[j]) and (best is None or col_best[j] > best.decrease):
            bi = int(col_best_i[j])
            thr = (sv[bi, j] + sv[bi + 1, j]) / 2
            best = Split(start + j, float(thr), float(col_best[j]))
    return best


def fit_tree(table: FeatureTable, params: TreeParams) -> DecisionTree:
    """Greedy recursive partitioning on the table's training rows."""
    if len(table) == 0:
        raise EmptyTable("cannot fit a tree on an empty table")
    for idx in params.excluded_features:
        if not (0 <= idx < table.n_features):
            raise ValueError(f"excluded feature index {idx} outside table width {table.n_features}")

    X = np.asarray(table.X, dtype=np.float64)
    y = table.y
    n_classes = table.n_classes
    nodes: list[TreeNode] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        hist = np.bincount(y[rows], minlength=n_classes)
        node = TreeNode(
            id=len(nodes),
            histogram=[int(c) for c in hist],
            predicted_class=int(np.argmax(hist)),
        )
        nodes.append(node)
        nid = node.id

        pure = int(np.count_nonzero(hist)) <= 1
        if depth >= params.max_depth or len(rows) < params.min_samples_split or pure:
            return nid
        split = best_split(
            X[rows],
            y[rows],
            n_classes,
            excluded=params.excluded_features,
            min_samples_leaf=params.min_samples_leaf,
            criterion=params.criterion,
        )
        if split is None:
            return nid
        go_left = X[rows, split.feature] > split.threshold
        node.feature = split.feature
        node.threshold = split.threshold
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return nid

    grow(np.arange(len(table)), 0)
    return DecisionTree(
        nodes=nodes,
        n_features=table.n_features,
        class_order=list(table.class_order),
        layer_shape=table.layer_shape,
        params=params,
    )


def predict(tree: DecisionTree, vector: np.ndarray) -> int:
    """Route one vector to a leaf; value > threshold goes left."""
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vector.shape[0] != tree.n_features:
        raise DimensionMismatch(f"vector length {vector.shape[0]} != {tree.n_features}")
    node = tree.root
    while not node.is_leaf:
        node = tree.nodes[node.left] if vector[node.feature] > node.threshold else tree.nodes[node.right]
    return node.predicted_class


def predict_batch(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise DimensionMismatch(f"matrix width {X.shape} != {tree.n_features}")
    out = np.empty(len(X), dtype=np.int64)
    for i in range(len(X)):
        node = tree.root
        while not node.is_leaf:
            node = tree.nodes[node.left] if X[i, node.feature] > node.threshold else tree.nodes[node.right]
        out[i] = node.predicted_class
    return out


def tree_accuracy(tree: DecisionTree, table: FeatureTable) -> float:
    if len(table) == 0:
        raise EmptyTable("cannot score an empty table")
    return float(np.mean(predict_batch(tree, table.X) == table.y))


@dataclass
class ClassFlow:
    node_id: int
    # per class: (fraction routed left, fraction routed right), None when the
    # class never reaches this node
    fractions: list[Optional[tuple[float, float]]]


def class_flow(tree: DecisionTree, table: FeatureTable) -> list[ClassFlow]:
    """Per internal node, the left/right routing fractions of each class."""
    if len(table) == 0:
        raise EmptyTable("cannot compute flows on an empty table")
    X = np.asarray(table.X, dtype=np.float64)
    y = table.y
    K = tree_classes = len(tree.class_order)
    left = {n.id: np.zeros(K, dtype=np.int64) for n in tree.internal_nodes()}
    right = {n.id: np.zeros(K, dtype=np.int64) for n in tree.internal_nodes()}
    for i in range(len(X)):
        node = tree.root
        while not node.is_leaf:
            if X[i, node.feature] > node.threshold:
                left[node.id][y[i]] += 1
                node = tree.nodes[node.left]
            else:
                right[node.id][y[i]] += 1
                node = tree.nodes[node.right]
    flows = []
    for n in tree.internal_nodes():
        fr = []
        for k in range(tree_classes):
            total = int(left[n.id][k] + right[n.id][k])
            if total == 0:
                fr.append(None)
            else:
                fr.append((left[n.id][k] / total, right[n.id][k] / total))
        flows.append(ClassFlow(n.id, fr))
    return flows


def tree_to_dict(tree: DecisionTree) -> dict:
    nodes = []
    for n in tree.nodes:
        nodes.append(
            {
                "id": n.id,
                "feature": None if n.is_leaf else feature_id_of(n.feature, tree.layer_shape).name,
                "threshold": n.threshold,
                "left": n.left,
                "right": n.right,
                "histogram": n.histogram,
                "predicted_class": n.predicted_class,
            }
        )
    return {
        "class_order": tree.class_order,
        "layer_shape": list(tree.layer_shape),
        "n_features": tree.n_features,
        "params": {
            "max_depth": tree.params.max_depth,
            "min_samples_split": tree.params.min_samples_split,
            "min_samples_leaf": tree.params.min_samples_leaf,
            "excluded_features": sorted(
                feature_id_of(i, tree.layer_shape).name for i in tree.params.excluded_features
            ),
            "criterion": tree.params.criterion,
            "seed": tree.params.seed,
        },
        "nodes": nodes,
    }


def tree_from_dict(doc: dict) -> DecisionTree:
    layer_shape = tuple(doc["layer_shape"])
    params = TreeParams(
        max_depth=doc["params"]["max_depth"],
        min_samples_split=doc["params"]["min_samples_split"],
        min_samples_leaf=doc["params"]["min_samples_leaf"],
        excluded_features=frozenset(
            feature_index(parse_feature_name(s), layer_shape) for s in doc["params"]["excluded_features"]
        ),
        criterion=doc["params"]["criterion"],
        seed=doc["params"]["seed"],
    )
    nodes = []
    for nd in doc["nodes"]:
        nodes.append(
            TreeNode(
                id=nd["id"],
                histogram=list(nd["histogram"]),
                predicted_class=nd["predicted_class"],
                feature=None if nd["feature"] is None else feature_index(parse_feature_name(nd["feature"]), layer_shape),
                threshold=nd["threshold"],
                left=nd["left"],
                right=nd["right"],
            )
        )
    return DecisionTree(
        nodes=nodes,
        n_features=doc["n_features"],
        class_order=list(doc["class_order"]),
        layer_shape=layer_shape,
        params=params,
    )


def save_tree(tree: DecisionTree, path) -> None:
    with open(path, "w") as f:
        json.dump(tree_to_dict(tree), f, indent=2, sort_keys=True)
        f.write("\n")


def load_tree(path) -> DecisionTree:
    with open(path) as f:
        return tree_from_dict(json.load(f))
