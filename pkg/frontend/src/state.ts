// UI state is a pure function of the last server responses, the pending
// exclusion set, and the busy flag; reduce() is the only way it changes.

import type { HistoryEntry, TreeResponse } from "./types.js";

export interface TreeViewState {
  tree: TreeResponse | null;
  history: HistoryEntry[];
  selected: number | null;
  examples: Record<number, string[]>;
  pending: string[];
  busy: boolean;
  error: string | null;
}

export const initialState: TreeViewState = {
  tree: null,
  history: [],
  selected: null,
  examples: {},
  pending: [],
  busy: false,
  error: null,
};

export type Action =
  | { type: "tree"; response: TreeResponse }
  | { type: "history"; entries: HistoryEntry[] }
  | { type: "select"; nodeId: number }
  | { type: "examples"; nodeId: number; urls: string[] }
  | { type: "toggle"; feature: string }
  | { type: "submit" }
  | { type: "rebuilt"; response: TreeResponse }
  | { type: "error"; message: string }
  | { type: "dismiss-error" };

export function reduce(state: TreeViewState, action: Action): TreeViewState {
  switch (action.type) {
    case "tree": {
      const ids = new Set(action.response.tree.tree.nodes.map((n) => n.id));
      const selected = state.selected !== null && ids.has(state.selected) ? state.selected : null;
      return { ...state, tree: action.response, selected, error: null };
    }
    case "history":
      return { ...state, history: action.entries };
    case "select":
      return { ...state, selected: action.nodeId };
    case "examples":
      return { ...state, examples: { ...state.examples, [action.nodeId]: action.urls } };
    case "toggle": {
      const pending = state.pending.includes(action.feature)
        ? state.pending.filter((f) => f !== action.feature)
        : [...state.pending, action.feature];
      return { ...state, pending };
    }
    case "submit":
      // the busy flag is the duplicate-submission guard
      return state.busy ? state : { ...state, busy: true, error: null };
    case "rebuilt": {
      const ids = new Set(action.response.tree.tree.nodes.map((n) => n.id));
      const selected = state.selected !== null && ids.has(state.selected) ? state.selected : null;
      return {
        ...state,
        tree: action.response,
        selected,
        pending: [],
        busy: false,
        examples: {},
        error: null,
      };
    }
    case "error":
      return { ...state, busy: false, error: action.message };
    case "dismiss-error":
      return { ...state, error: null };
  }
}
