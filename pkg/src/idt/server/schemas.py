"""Pydantic wire models for the explorer API.

These mirror the JSON documents the core package emits; the tree payload is
the serialized illuminated tree, structured here so FastAPI validates every
response against the published schema.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class TreeNodeModel(BaseModel):
    id: int
    feature: Optional[str] = None  # "row_col_channel", null for leaves
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None
    histogram: list[int]
    predicted_class: int


class TreeParamsModel(BaseModel):
    max_depth: int
    min_samples_split: int
    min_samples_leaf: int
    excluded_features: list[str]
    criterion: str
    seed: int


class DecisionTreeModel(BaseModel):
    class_order: list[str]
    layer_shape: list[int]
    n_features: int
    params: TreeParamsModel
    nodes: list[TreeNodeModel]


class NodeAnnotationModel(BaseModel):
    feature: str
    viz: str
    objective_final: float
    dead: bool
    flow: dict[str, Optional[tuple[float, float]]]


class LeafAnnotationModel(BaseModel):
    examples: list[str]


class MetricsModel(BaseModel):
    tree_train_acc: Optional[float] = None
    tree_test_acc: Optional[float] = None
    cnn_test_acc: Optional[float] = None


class IlluminatedTreeModel(BaseModel):
    version: int
    class_order: list[str]
    layer_shape: list[int]
    excluded: list[str]
    metrics: MetricsModel
    tree: DecisionTreeModel
    nodes: dict[str, NodeAnnotationModel]
    leaves: dict[str, LeafAnnotationModel]


class TreeResponse(BaseModel):
    history_index: int
    tree: IlluminatedTreeModel


class RebuildRequest(BaseModel):
    excluded: list[str] = Field(default_factory=list)
    max_depth: Optional[int] = None


class HistoryEntryModel(BaseModel):
    index: int
    excluded: list[str]
    metrics: MetricsModel


class NodeExamplesResponse(BaseModel):
    node_id: int
    examples: list[str]  # image URLs served by this API


class ErrorResponse(BaseModel):
    detail: str
