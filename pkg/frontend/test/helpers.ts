import type { Api } from "../src/api.js";
import type { HistoryEntry, NodeExamples, TreeResponse } from "../src/types.js";
import type { VNode } from "../src/view.js";

import treeBaseline from "./fixtures/tree_baseline.json";
import treeRebuilt from "./fixtures/tree_rebuilt.json";
import historyBaseline from "./fixtures/history_baseline.json";
import historyRebuilt from "./fixtures/history_rebuilt.json";
import examplesRoot from "./fixtures/examples_root.json";
import examplesLeaf from "./fixtures/examples_leaf.json";
import meta from "./fixtures/meta.json";

export const fixtures = {
  baseline: treeBaseline as unknown as TreeResponse,
  rebuilt: treeRebuilt as unknown as TreeResponse,
  historyBaseline: historyBaseline as unknown as HistoryEntry[],
  historyRebuilt: historyRebuilt as unknown as HistoryEntry[],
  examplesRoot: examplesRoot as unknown as NodeExamples,
  examplesLeaf: examplesLeaf as unknown as NodeExamples,
  meta: meta as { root_feature: string; leaf_id: number; baseline_acc: number; rebuilt_acc: number },
};

const clone = <T>(x: T): T => JSON.parse(JSON.stringify(x)) as T;

export function findAll(root: VNode | string, pred: (v: VNode) => boolean): VNode[] {
  if (typeof root === "string") return [];
  const hits: VNode[] = [];
  if (pred(root)) hits.push(root);
  for (const child of root.children) hits.push(...findAll(child, pred));
  return hits;
}

export function byClass(root: VNode, cls: string): VNode[] {
  return findAll(root, (v) => (v.attrs.class ?? "").split(" ").includes(cls));
}

export function textOf(node: VNode | string): string {
  if (typeof node === "string") return node;
  return node.children.map(textOf).join(" ");
}

export interface FakeServer {
  api: Api;
  counts: { tree: number; history: number; examples: number; rebuild: number };
  rebuildDelayMs: number;
}

export function fakeServer(opts: { failHistory?: boolean } = {}): FakeServer {
  let rebuilt = false;
  const counts = { tree: 0, history: 0, examples: 0, rebuild: 0 };
  const server: FakeServer = {
    counts,
    rebuildDelayMs: 5,
    api: {
      async getTree() {
        counts.tree += 1;
        return clone(rebuilt ? fixtures.rebuilt : fixtures.baseline);
      },
      async getHistory() {
        counts.history += 1;
        if (opts.failHistory) {
          const { HttpError } = await import("../src/api.js");
          throw new HttpError(500, "history unavailable");
        }
        return clone(rebuilt ? fixtures.historyRebuilt : fixtures.historyBaseline);
      },
      async getExamples(nodeId: number) {
        counts.examples += 1;
        if (nodeId === 0) return clone(fixtures.examplesRoot.examples);
        if (nodeId === fixtures.meta.leaf_id) return clone(fixtures.examplesLeaf.examples);
        return [];
      },
      async rebuild(excluded: string[]) {
        counts.rebuild += 1;
        await new Promise((r) => setTimeout(r, server.rebuildDelayMs));
        if (excluded.length !== 1 || excluded[0] !== fixtures.meta.root_feature) {
          const { HttpError } = await import("../src/api.js");
          throw new HttpError(400, `fixture only supports excluding ${fixtures.meta.root_feature}`);
        }
        rebuilt = true;
        return clone(fixtures.rebuilt);
      },
    },
  };
  return server;
}
