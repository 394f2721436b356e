"""Illuminated trees: a fitted tree plus per-node visual evidence.

Every internal node gets the activation-maximization image of its split
feature's channel (channel-mean objective, so two nodes testing the same
channel at different positions share one cached image), the per-class
left/right routing fractions, and every leaf gets a handful of example
images routed to it. A Session keeps an append-only history of rebuilds so
a modeler can exclude a suspect feature, refit, and compare accuracies
without retraining the CNN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dtree import (
    DecisionTree,
    TreeParams,
    class_flow,
    fit_tree,
    tree_accuracy,
    tree_from_dict,
    tree_to_dict,
)
from .errors import LayerMismatch
from .features import FeatureTable, feature_id_of, feature_index, parse_feature_name
from .featviz import VizCache, VizParams
from .model import TrainedModel, evaluate

SCHEMA_VERSION = 1


@dataclass
class NodeAnnotation:
    feature_name: str
    viz_path: str
    objective_final: float
    dead: bool
    flow: dict[str, Optional[tuple[float, float]]]  # class -> (left, right)


@dataclass
class LeafAnnotation:
    example_paths: list[str]


@dataclass
class IlluminatedTree:
    tree: DecisionTree
    node_annotations: dict[int, NodeAnnotation]
    leaf_annotations: dict[int, LeafAnnotation]
    metrics: dict[str, Optional[float]]
    excluded_names: list[str]

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "class_order": self.tree.class_order,
            "layer_shape": list(self.tree.layer_shape),
            "excluded": self.excluded_names,
            "metrics": self.metrics,
            "tree": tree_to_dict(self.tree),
            "nodes": {
                str(nid): {
                    "feature": a.feature_name,
                    "viz": a.viz_path,
                    "objective_final": a.objective_final,
                    "dead": a.dead,
                    "flow": {k: (list(v) if v is not None else None) for k, v in a.flow.items()},
                }
                for nid, a in self.node_annotations.items()
            },
            "leaves": {
                str(nid): {"examples": a.example_paths} for nid, a in self.leaf_annotations.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IlluminatedTree":
        tree = tree_from_dict(doc["tree"])
        nodes = {
            int(nid): NodeAnnotation(
                feature_name=a["feature"],
                viz_path=a["viz"],
                objective_final=a["objective_final"],
                dead=a["dead"],
                flow={k: (tuple(v) if v is not None else None) for k, v in a["flow"].items()},
            )
            for nid, a in doc["nodes"].items()
        }
        leaves = {int(nid): LeafAnnotation(list(a["examples"])) for nid, a in doc["leaves"].items()}
        return cls(tree, nodes, leaves, dict(doc["metrics"]), list(doc["excluded"]))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "IlluminatedTree":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def routed_rows(tree: DecisionTree, X: np.ndarray) -> dict[int, list[int]]:
    """Row indices visiting each node, in table order (root sees every row)."""
    visits: dict[int, list[int]] = {n.id: [] for n in tree.nodes}
    X = np.asarray(X, dtype=np.float64)
    for i in range(len(X)):
        node = tree.root
        visits[node.id].append(i)
        while not node.is_leaf:
            node = tree.nodes[node.left] if X[i, node.feature] > node.threshold else tree.nodes[node.right]
            visits[node.id].append(i)
    return visits


def build_illuminated_tree(
    tree: DecisionTree,
    model: TrainedModel,
    viz_params: VizParams,
    table: FeatureTable,
    manifest=None,
    viz_cache: VizCache | None = None,
    max_examples: int = 9,
) -> IlluminatedTree:
    """Attach visualizations, flows, leaf examples, and metrics to a tree."""
    layer_shape = model.layer_shape(table.layer_name)
    expected = layer_shape[0] * layer_shape[1] * layer_shape[2]
    if tree.n_features != expected:
        raise LayerMismatch(
            f"tree width {tree.n_features} != {expected} for layer {table.layer_name!r}"
        )
    cache = viz_cache if viz_cache is not None else VizCache()

    train = table.subset("train")
    test = table.subset("test")
    flow_table = train if len(train) else table
    flows = {f.node_id: f for f in class_flow(tree, flow_table)}

    node_annotations: dict[int, NodeAnnotation] = {}
    for node in tree.internal_nodes():
        fid = feature_id_of(node.feature, tree.layer_shape)
        fi = cache.get_or_create(model, table.layer_name, fid.channel, viz_params)
        viz_path = f"features/{table.layer_name}_{fid.channel}.png"
        flow = {
            cls: flows[node.id].fractions[k] for k, cls in enumerate(tree.class_order)
        }
        node_annotations[node.id] = NodeAnnotation(
            feature_name=fid.name,
            viz_path=viz_path,
            objective_final=fi.objective_final,
            dead=fi.dead,
            flow=flow,
        )

    example_table = test if len(test) else table
    visits = routed_rows(tree, example_table.X)
    leaf_annotations = {
        leaf.id: LeafAnnotation([example_table.paths[i] for i in visits[leaf.id][:max_examples]])
        for leaf in tree.leaves()
    }

    metrics: dict[str, Optional[float]] = {
        "tree_train_acc": tree_accuracy(tree, train) if len(train) else None,
        "tree_test_acc": tree_accuracy(tree, test) if len(test) else None,
        "cnn_test_acc": None,
    }
    cnn_test = model.train_metrics.get("final_test_acc")
    if cnn_test is None and manifest is not None and manifest.split_entries("test"):
        cnn_test = evaluate(model, manifest, "test")
    metrics["cnn_test_acc"] = cnn_test
    return IlluminatedTree(tree, node_annotations, leaf_annotations, metrics, [])


@dataclass
class HistoryEntry:
    excluded_names: list[str]
    itree: IlluminatedTree


class Session:
    """Exclude-and-rebuild loop over a fixed model and feature table.

    history[0] is the baseline tree; every rebuild appends one entry and
    never mutates older ones.
    """

    def __init__(
        self,
        model: TrainedModel,
        table: FeatureTable,
        base_params: TreeParams,
        viz_params: VizParams = VizParams(),
        manifest=None,
        viz_cache: VizCache | None = None,
        baseline: IlluminatedTree | None = None,
    ):
        self.model = model
        self.table = table
        self.manifest = manifest
        self.base_params = base_params
        self.viz_params = viz_params
        self.viz_cache = viz_cache if viz_cache is not None else VizCache()
        self.history: list[HistoryEntry] = []
        if baseline is None:
            baseline = self._fit_and_illuminate(base_params)
            baseline.excluded_names = self._names(base_params.excluded_features)
        self.history.append(HistoryEntry(list(baseline.excluded_names), baseline))

    def _names(self, indices) -> list[str]:
        return sorted(feature_id_of(i, self.table.layer_shape).name for i in indices)

    def _fit_and_illuminate(self, params: TreeParams) -> IlluminatedTree:
        train = self.table.subset("train")
        fit_on = train if len(train) else self.table
        tree = fit_tree(fit_on, params)
        itree = build_illuminated_tree(
            tree, self.model, self.viz_params, self.table, self.manifest, self.viz_cache
        )
        itree.excluded_names = self._names(params.excluded_features)
        return itree

    @property
    def latest(self) -> IlluminatedTree:
        return self.history[-1].itree

    def rebuild_with_exclusions(
        self, excluded_names: list[str], max_depth: int | None = None
    ) -> IlluminatedTree:
        """Refit with base exclusions plus the named ones; append to history."""
        indices = {
            feature_index(parse_feature_name(name), self.table.layer_shape)
            for name in excluded_names
        }
        params = replace(
            self.base_params,
            excluded_features=frozenset(self.base_params.excluded_features | indices),
            max_depth=max_depth if max_depth is not None else self.base_params.max_depth,
        )
        itree = self._fit_and_illuminate(params)
        self.history.append(HistoryEntry(list(itree.excluded_names), itree))
        return itree
