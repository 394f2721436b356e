// Pure view: TreeViewState in, a plain element-descriptor tree out.
// No fetches, no timers, no DOM reads; dom.ts turns descriptors into nodes.

import { CARD_H, CARD_W, computeLayout } from "./layout.js";
import type { Action, TreeViewState } from "./state.js";
import type { FlowPair, IlluminatedTree, TreeNode } from "./types.js";

export interface VNode {
  tag: string;
  attrs: Record<string, string>;
  on?: { click?: Action };
  children: Array<VNode | string>;
}

export function h(
  tag: string,
  attrs: Record<string, string> = {},
  children: Array<VNode | string> = [],
  on?: { click?: Action },
): VNode {
  return on ? { tag, attrs, children, on } : { tag, attrs, children };
}

export function pct(fraction: number): string {
  return `${Math.round(fraction * 100)}%`;
}

export function acc(value: number | null): string {
  return value === null ? "n/a" : String(value); // server value, verbatim
}

function formatThreshold(threshold: number | null): string {
  if (threshold === null) return "";
  return Number(threshold.toPrecision(5)).toString();
}

function vizUrl(feature: string): string {
  return `/api/feature/${feature}/viz.png`;
}

function flowLines(flow: Record<string, FlowPair>): VNode[] {
  return Object.keys(flow)
    .sort()
    .filter((cls) => flow[cls] !== null)
    .map((cls) => {
      const [left, right] = flow[cls]!;
      return h("div", { class: "flow-line", "data-class": cls }, [
        `${cls}: ${pct(left)} left / ${pct(right)} right`,
      ]);
    });
}

function internalCard(itree: IlluminatedTree, node: TreeNode, state: TreeViewState): VNode[] {
  const ann = itree.nodes[String(node.id)];
  const isPending = state.pending.includes(ann.feature);
  const children: VNode[] = [
    h("img", { class: "thumb", src: vizUrl(ann.feature), alt: ann.feature, width: "64", height: "64" }),
    h("div", { class: "feature-name" }, [ann.feature]),
    h("div", { class: "criterion" }, [`> ${formatThreshold(node.threshold)} goes left`]),
    ...flowLines(ann.flow),
  ];
  if (ann.dead) children.push(h("div", { class: "dead-marker" }, ["dead channel"]));
  if (isPending) children.push(h("div", { class: "badge pending" }, ["excluded (pending)"]));
  return children;
}

function leafCard(itree: IlluminatedTree, node: TreeNode): VNode[] {
  const peak = Math.max(...node.histogram, 1);
  const rows = itree.class_order.map((cls, k) =>
    h("div", { class: "hist-row" }, [
      h("div", {
        class: `hist-bar class-${k}`,
        style: `width:${Math.round((100 * node.histogram[k]) / peak)}%`,
      }),
      h("span", { class: "hist-label" }, [`${cls} ${node.histogram[k]}`]),
    ]),
  );
  return [
    ...rows,
    h("div", { class: "leaf-pred" }, [`→ ${itree.class_order[node.predicted_class]}`]),
  ];
}

function treeCanvas(state: TreeViewState): VNode {
  const itree = state.tree!.tree;
  const layout = computeLayout(itree.tree);
  const edgeLines = layout.edges.map((e) => {
    const p = layout.positions.get(e.parent)!;
    const c = layout.positions.get(e.child)!;
    return h("line", {
      x1: String(p.x),
      y1: String(p.y + CARD_H),
      x2: String(c.x),
      y2: String(c.y),
      stroke: "#999",
      "stroke-width": "1.5",
    });
  });
  const cards = itree.tree.nodes.map((node) => {
    const pos = layout.positions.get(node.id)!;
    const leaf = node.feature === null;
    const classes = ["card", leaf ? "leaf" : "internal"];
    if (state.selected === node.id) classes.push("selected");
    return h(
      "div",
      {
        class: classes.join(" "),
        style: `left:${pos.x - CARD_W / 2}px;top:${pos.y}px`,
        "data-node-id": String(node.id),
        ...(node.feature !== null ? { "data-feature": node.feature } : {}),
      },
      leaf ? leafCard(itree, node) : internalCard(itree, node, state),
      { click: { type: "select", nodeId: node.id } },
    );
  });
  return h("div", { class: "tree-canvas", style: `width:${layout.width}px;height:${layout.height}px` }, [
    h("svg", { class: "edges", width: String(layout.width), height: String(layout.height) }, edgeLines),
    ...cards,
  ]);
}

function detailPanel(state: TreeViewState): VNode {
  const itree = state.tree!.tree;
  const node = itree.tree.nodes.find((n) => n.id === state.selected);
  if (!node) return h("aside", { class: "detail empty" }, ["select a node"]);
  const children: Array<VNode | string> = [h("h2", {}, [`node ${node.id}`])];
  if (node.feature !== null) {
    const ann = itree.nodes[String(node.id)];
    const isPending = state.pending.includes(ann.feature);
    children.push(
      h("img", { class: "viz-large", src: vizUrl(ann.feature), alt: ann.feature, width: "200", height: "200" }),
      h("div", { class: "feature-name" }, [ann.feature]),
      h("div", {}, [`threshold ${formatThreshold(node.threshold)} (greater goes left)`]),
      h("div", {}, [`objective ${Number(ann.objective_final.toPrecision(5))}`]),
      ...flowLines(ann.flow),
      h(
        "button",
        { class: "toggle-exclude", "data-feature": ann.feature },
        [isPending ? "undo exclude" : "exclude feature"],
        { click: { type: "toggle", feature: ann.feature } },
      ),
    );
  } else {
    children.push(...leafCard(itree, node));
  }
  const urls = state.examples[node.id];
  children.push(h("h3", {}, ["examples"]));
  if (urls === undefined) {
    children.push(h("div", { class: "examples-loading" }, ["loading examples..."]));
  } else if (urls.length === 0) {
    children.push(h("div", { class: "examples-empty" }, ["no routed examples"]));
  } else {
    children.push(
      h(
        "div",
        { class: "examples" },
        urls.map((u) => h("img", { class: "example", src: u, width: "48", height: "48" })),
      ),
    );
  }
  return h("aside", { class: "detail" }, children);
}

function timeline(state: TreeViewState): VNode {
  const items = state.history.map((entry, i) => {
    const children: Array<VNode | string> = [
      h("span", { class: "tl-index" }, [`#${entry.index}`]),
      h("span", { class: "tl-excluded" }, [
        entry.excluded.length ? `excluded: ${entry.excluded.join(", ")}` : "baseline",
      ]),
      h("span", { class: "tl-acc" }, [`test acc ${acc(entry.metrics.tree_test_acc)}`]),
    ];
    if (i > 0) {
      const prev = state.history[i - 1].metrics.tree_test_acc;
      const cur = entry.metrics.tree_test_acc;
      if (prev !== null && cur !== null) {
        const delta = cur - prev;
        children.push(
          h("span", { class: `tl-delta ${delta >= 0 ? "up" : "down"}`, "data-delta": String(delta) }, [
            `${delta >= 0 ? "+" : ""}${delta.toFixed(4)}`,
          ]),
        );
      }
    }
    return h("li", { class: "tl-entry" }, children);
  });
  return h("section", { class: "timeline" }, [h("h3", {}, ["rebuild timeline"]), h("ul", {}, items)]);
}

function header(state: TreeViewState): VNode {
  const children: Array<VNode | string> = [h("h1", {}, ["illuminated tree explorer"])];
  if (state.tree) {
    const m = state.tree.tree.metrics;
    children.push(
      h("div", { class: "metrics" }, [
        h("span", { class: "m-tree-train" }, [`tree train ${acc(m.tree_train_acc)}`]),
        h("span", { class: "m-tree-test" }, [`tree test ${acc(m.tree_test_acc)}`]),
        h("span", { class: "m-cnn-test" }, [`cnn test ${acc(m.cnn_test_acc)}`]),
        h("span", { class: "m-history" }, [`history #${state.tree.history_index}`]),
      ]),
    );
  }
  if (state.busy) children.push(h("div", { class: "busy" }, ["rebuilding..."]));
  if (state.error !== null) {
    children.push(
      h("div", { class: "banner error", role: "alert" }, [
        state.error,
        h("button", { class: "dismiss" }, ["dismiss"], { click: { type: "dismiss-error" } }),
      ]),
    );
  }
  return h("header", {}, children);
}

function controls(state: TreeViewState): VNode {
  const pendingBadges = state.pending.map((f) =>
    h("span", { class: "badge pending", "data-feature": f }, [f], {
      click: { type: "toggle", feature: f },
    }),
  );
  const attrs: Record<string, string> = { class: "rebuild" };
  if (state.busy) attrs.disabled = "disabled";
  return h("section", { class: "controls" }, [
    h("div", { class: "pending-list" }, [
      h("span", {}, [state.pending.length ? "pending exclusions:" : "no pending exclusions"]),
      ...pendingBadges,
    ]),
    h("button", attrs, ["rebuild tree"], { click: { type: "submit" } }),
  ]);
}

export function renderTreeView(state: TreeViewState): VNode {
  const body: VNode[] = [header(state)];
  if (state.tree === null) {
    body.push(h("main", {}, [h("div", { class: "loading" }, ["loading tree..."])]));
  } else {
    body.push(
      h("main", {}, [treeCanvas(state), detailPanel(state)]),
      controls(state),
      timeline(state),
    );
  }
  return h("div", { id: "app" }, body);
}
