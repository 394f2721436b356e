import { describe, expect, it } from "vitest";

import { initialState, reduce } from "../src/state.js";
import { fixtures } from "./helpers.js";

describe("reduce", () => {
  it("stores the tree and clears stale selection", () => {
    let s = reduce(initialState, { type: "tree", response: fixtures.baseline });
    expect(s.tree?.history_index).toBe(0);
    s = { ...s, selected: 999 };
    s = reduce(s, { type: "tree", response: fixtures.baseline });
    expect(s.selected).toBeNull();
  });

  it("keeps a still-valid selection across tree updates", () => {
    let s = reduce(initialState, { type: "tree", response: fixtures.baseline });
    s = reduce(s, { type: "select", nodeId: 0 });
    s = reduce(s, { type: "tree", response: fixtures.baseline });
    expect(s.selected).toBe(0);
  });

  it("toggle adds then removes a feature", () => {
    let s = reduce(initialState, { type: "toggle", feature: "6_5_9" });
    expect(s.pending).toEqual(["6_5_9"]);
    s = reduce(s, { type: "toggle", feature: "0_0_20" });
    expect(s.pending).toEqual(["6_5_9", "0_0_20"]);
    s = reduce(s, { type: "toggle", feature: "6_5_9" });
    expect(s.pending).toEqual(["0_0_20"]);
  });

  it("submit sets busy once and ignores duplicates", () => {
    const first = reduce(initialState, { type: "submit" });
    expect(first.busy).toBe(true);
    const second = reduce(first, { type: "submit" });
    expect(second).toBe(first); // identical state object: nothing happened
  });

  it("rebuilt swaps the tree, clears pending and busy, drops cached examples", () => {
    let s = reduce(initialState, { type: "tree", response: fixtures.baseline });
    s = reduce(s, { type: "toggle", feature: fixtures.meta.root_feature });
    s = reduce(s, { type: "submit" });
    s = reduce(s, { type: "examples", nodeId: 0, urls: ["/api/image/x.png"] });
    s = reduce(s, { type: "rebuilt", response: fixtures.rebuilt });
    expect(s.busy).toBe(false);
    expect(s.pending).toEqual([]);
    expect(s.examples).toEqual({});
    expect(s.tree?.history_index).toBe(1);
  });

  it("error clears busy and surfaces the message", () => {
    let s = reduce(initialState, { type: "submit" });
    s = reduce(s, { type: "error", message: "server said 409: a rebuild is already in flight" });
    expect(s.busy).toBe(false);
    expect(s.error).toContain("409");
    s = reduce(s, { type: "dismiss-error" });
    expect(s.error).toBeNull();
  });
});
