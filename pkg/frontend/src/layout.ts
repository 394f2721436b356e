// Layered top-down layout, mirroring the server's SVG: leaves claim x slots
// left to right, internal nodes center over their children.

import type { DecisionTree } from "./types.js";

export const CARD_W = 180;
export const CARD_H = 168;
export const H_GAP = 24;
export const V_GAP = 64;

export interface NodePosition {
  x: number; // card center
  y: number; // card top
  depth: number;
}

export interface Edge {
  parent: number;
  child: number;
  side: 0 | 1; // 0 = left (> threshold), 1 = right
}

export interface Layout {
  positions: Map<number, NodePosition>;
  edges: Edge[];
  width: number;
  height: number;
}

export function computeLayout(tree: DecisionTree): Layout {
  const byId = new Map(tree.nodes.map((n) => [n.id, n]));
  const positions = new Map<number, NodePosition>();
  const edges: Edge[] = [];
  let slot = 0;
  let maxDepth = 0;

  function place(id: number, depth: number): number {
    const node = byId.get(id)!;
    maxDepth = Math.max(maxDepth, depth);
    let x: number;
    if (node.feature === null) {
      x = slot * (CARD_W + H_GAP) + CARD_W / 2;
      slot += 1;
    } else {
      edges.push({ parent: id, child: node.left!, side: 0 });
      edges.push({ parent: id, child: node.right!, side: 1 });
      const xl = place(node.left!, depth + 1);
      const xr = place(node.right!, depth + 1);
      x = (xl + xr) / 2;
    }
    positions.set(id, { x, y: depth * (CARD_H + V_GAP), depth });
    return x;
  }

  place(0, 0);
  return {
    positions,
    edges,
    width: slot * (CARD_W + H_GAP) - H_GAP,
    height: (maxDepth + 1) * (CARD_H + V_GAP) - V_GAP,
  };
}
