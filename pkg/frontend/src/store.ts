// Dispatch loop: reduce synchronously, notify, then run the action's side
// effects (fetches) and dispatch their results. Duplicate submits die in the
// reducer (busy flag), so no second rebuild request ever leaves the client.

import type { Api } from "./api.js";
import { HttpError } from "./api.js";
import type { Action, TreeViewState } from "./state.js";
import { initialState, reduce } from "./state.js";

export interface Store {
  get(): TreeViewState;
  dispatch(action: Action): Promise<void>;
  init(): Promise<void>;
}

function describe(err: unknown): string {
  if (err instanceof HttpError) return `server said ${err.status}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

export function createStore(api: Api, onChange: (s: TreeViewState) => void): Store {
  let state = initialState;

  function apply(action: Action): TreeViewState {
    const prev = state;
    state = reduce(state, action);
    if (state !== prev) onChange(state);
    return prev;
  }

  async function dispatch(action: Action): Promise<void> {
    const prev = apply(action);
    try {
      if (action.type === "select" && !(action.nodeId in state.examples)) {
        const urls = await api.getExamples(action.nodeId);
        apply({ type: "examples", nodeId: action.nodeId, urls });
      } else if (action.type === "submit" && !prev.busy) {
        const response = await api.rebuild(state.pending);
        apply({ type: "rebuilt", response });
        apply({ type: "history", entries: await api.getHistory() });
      }
    } catch (err) {
      apply({ type: "error", message: describe(err) });
    }
  }

  async function init(): Promise<void> {
    try {
      apply({ type: "tree", response: await api.getTree() });
    } catch (err) {
      apply({ type: "error", message: describe(err) });
    }
    try {
      apply({ type: "history", entries: await api.getHistory() });
    } catch (err) {
      // degraded mode: the tree still renders without the timeline
      apply({ type: "error", message: describe(err) });
    }
  }

  return { get: () => state, dispatch, init };
}
