// Wire types for the explorer API; see docs/api_schema.json in the repo root.

export interface TreeNode {
  id: number;
  feature: string | null; // "row_col_channel", null for leaves
  threshold: number | null;
  left: number | null;
  right: number | null;
  histogram: number[];
  predicted_class: number;
}

export interface TreeParams {
  max_depth: number;
  min_samples_split: number;
  min_samples_leaf: number;
  excluded_features: string[];
  criterion: string;
  seed: number;
}

export interface DecisionTree {
  class_order: string[];
  layer_shape: number[];
  n_features: number;
  params: TreeParams;
  nodes: TreeNode[];
}

export interface Metrics {
  tree_train_acc: number | null;
  tree_test_acc: number | null;
  cnn_test_acc: number | null;
}

export type FlowPair = [number, number] | null; // fractions routed (left, right)

export interface NodeAnnotation {
  feature: string;
  viz: string;
  objective_final: number;
  dead: boolean;
  flow: Record<string, FlowPair>;
}

export interface LeafAnnotation {
  examples: string[];
}

export interface IlluminatedTree {
  version: number;
  class_order: string[];
  layer_shape: number[];
  excluded: string[];
  metrics: Metrics;
  tree: DecisionTree;
  nodes: Record<string, NodeAnnotation>;
  leaves: Record<string, LeafAnnotation>;
}

export interface TreeResponse {
  history_index: number;
  tree: IlluminatedTree;
}

export interface HistoryEntry {
  index: number;
  excluded: string[];
  metrics: Metrics;
}

export interface NodeExamples {
  node_id: number;
  examples: string[];
}
