// The full explorer loop against a fixture session recorded from the real
// server: load the tree, select the root, queue its feature for exclusion,
// rebuild, and verify what the user would see.

import { describe, expect, it } from "vitest";

import { createStore } from "../src/store.js";
import { renderTreeView } from "../src/view.js";
import { byClass, fakeServer, findAll, fixtures, textOf } from "./helpers.js";

describe("explorer round trip", () => {
  it("exclude root feature, rebuild, compare accuracies", async () => {
    const server = fakeServer();
    const store = createStore(server.api, () => {});
    await store.init();

    // baseline rendered
    let v = renderTreeView(store.get());
    const rootCard = findAll(v, (n) => n.attrs["data-node-id"] === "0")[0];
    expect(rootCard.attrs["data-feature"]).toBe(fixtures.meta.root_feature);

    // select the root: its detail panel loads examples
    await store.dispatch({ type: "select", nodeId: 0 });
    v = renderTreeView(store.get());
    expect(byClass(v, "detail")[0]).toBeDefined();
    expect(byClass(v, "example").length).toBeGreaterThan(0);
    expect(byClass(v, "example").length).toBeLessThanOrEqual(9);

    // toggle the root feature: pending badge appears
    await store.dispatch({ type: "toggle", feature: fixtures.meta.root_feature });
    v = renderTreeView(store.get());
    expect(byClass(v, "pending").length).toBeGreaterThanOrEqual(1);

    // double-click submit: the second one must be suppressed client-side
    const first = store.dispatch({ type: "submit" });
    const second = store.dispatch({ type: "submit" });
    await Promise.all([first, second]);
    expect(server.counts.rebuild).toBe(1);

    // the rebuilt tree no longer references the excluded feature anywhere
    v = renderTreeView(store.get());
    const features = findAll(v, (n) => n.attrs["data-feature"] !== undefined).map(
      (n) => n.attrs["data-feature"],
    );
    expect(features).not.toContain(fixtures.meta.root_feature);
    expect(store.get().tree?.history_index).toBe(1);
    expect(store.get().pending).toEqual([]);
    expect(store.get().busy).toBe(false);

    // displayed accuracy delta equals the server's metrics difference
    const delta = byClass(v, "tl-delta")[0];
    expect(delta.attrs["data-delta"]).toBe(
      String(fixtures.meta.rebuilt_acc - fixtures.meta.baseline_acc),
    );
  });

  it("empty pending set still round-trips (fixture rejects it as the server would a no-op)", async () => {
    const server = fakeServer();
    const store = createStore(server.api, () => {});
    await store.init();
    await store.dispatch({ type: "submit" });
    // fixture server 400s on anything but the recorded exclusion; the UI
    // surfaces it and stays usable
    expect(server.counts.rebuild).toBe(1);
    expect(store.get().error).toContain("400");
    expect(store.get().busy).toBe(false);
    const v = renderTreeView(store.get());
    expect(byClass(v, "card").length).toBeGreaterThan(0);
  });

  it("history endpoint failure degrades to banner plus tree", async () => {
    const server = fakeServer({ failHistory: true });
    const store = createStore(server.api, () => {});
    await store.init();
    const v = renderTreeView(store.get());
    expect(byClass(v, "error").length).toBe(1);
    expect(textOf(byClass(v, "error")[0])).toContain("history unavailable");
    expect(byClass(v, "card").length).toBeGreaterThan(0);
  });

  it("rebuild conflict (409) surfaces as a message", async () => {
    const server = fakeServer();
    const base = server.api.rebuild.bind(server.api);
    server.api.rebuild = async () => {
      const { HttpError } = await import("../src/api.js");
      throw new HttpError(409, "a rebuild is already in flight");
    };
    const store = createStore(server.api, () => {});
    await store.init();
    await store.dispatch({ type: "toggle", feature: fixtures.meta.root_feature });
    await store.dispatch({ type: "submit" });
    expect(store.get().error).toContain("409");
    expect(store.get().busy).toBe(false);
    server.api.rebuild = base;
  });
});
