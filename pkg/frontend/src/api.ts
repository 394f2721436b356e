import type { HistoryEntry, NodeExamples, TreeResponse } from "./types.js";

export class HttpError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface Api {
  getTree(): Promise<TreeResponse>;
  getHistory(): Promise<HistoryEntry[]>;
  getExamples(nodeId: number): Promise<string[]>;
  rebuild(excluded: string[], maxDepth?: number): Promise<TreeResponse>;
}

type Fetch = (input: string, init?: RequestInit) => Promise<Response>;

async function parse<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new HttpError(res.status, detail);
  }
  return (await res.json()) as T;
}

export function makeApi(fetchImpl: Fetch, base = ""): Api {
  return {
    async getTree() {
      return parse<TreeResponse>(await fetchImpl(`${base}/api/tree`));
    },
    async getHistory() {
      return parse<HistoryEntry[]>(await fetchImpl(`${base}/api/history`));
    },
    async getExamples(nodeId: number) {
      const body = await parse<NodeExamples>(await fetchImpl(`${base}/api/node/${nodeId}/examples`));
      return body.examples;
    },
    async rebuild(excluded: string[], maxDepth?: number) {
      const payload: { excluded: string[]; max_depth?: number } = { excluded };
      if (maxDepth !== undefined) payload.max_depth = maxDepth;
      return parse<TreeResponse>(
        await fetchImpl(`${base}/api/rebuild`, {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify(payload),
        }),
      );
    },
  };
}
