import type { EditJobRequest } from "./types";

export type EntryState = "pending" | "running" | "done" | "failed";

export interface HistoryEntry {
  id: string;
  /** Entry this one was branched from, or null for a fresh submission. */
  parentId: string | null;
  label: string;
  createdAt: number;
  request: EditJobRequest;
  maskPng: Uint8Array | null;
  jobId: string | null;
  state: EntryState;
  resultBytes: Uint8Array | null;
  error: string | null;
}

let counter = 0;

function nextId(): string {
  counter += 1;
  return `h${counter}-${Date.now().toString(36)}`;
}

function cloneRequest(req: EditJobRequest): EditJobRequest {
  return JSON.parse(JSON.stringify(req)) as EditJobRequest;
}

/**
 * Record of every edit submitted this session. Entries form a tree:
 * tweaking the parameters of an old result and resubmitting creates a
 * child of that entry rather than losing the original line of work.
 */
export class SessionHistory {
  entries: HistoryEntry[] = [];

  add(request: EditJobRequest, maskPng: Uint8Array | null, parentId: string | null = null): HistoryEntry {
    if (parentId !== null && !this.get(parentId)) {
      throw new Error(`unknown parent entry ${parentId}`);
    }
    const entry: HistoryEntry = {
      id: nextId(),
      parentId,
      label: describeRequest(request),
      createdAt: Date.now(),
      request: cloneRequest(request),
      maskPng: maskPng ? maskPng.slice() : null,
      jobId: null,
      state: "pending",
      resultBytes: null,
      error: null,
    };
    this.entries.push(entry);
    return entry;
  }

  get(id: string): HistoryEntry | undefined {
    return this.entries.find((e) => e.id === id);
  }

  children(id: string): HistoryEntry[] {
    return this.entries.filter((e) => e.parentId === id);
  }

  roots(): HistoryEntry[] {
    return this.entries.filter((e) => e.parentId === null);
  }

  /** Depth of an entry in its branch tree; roots are 0. */
  depth(id: string): number {
    let d = 0;
    let cur = this.get(id);
    while (cur && cur.parentId !== null) {
      cur = this.get(cur.parentId);
      d += 1;
    }
    return d;
  }

  /**
   * Copy the parameters of an existing entry so they can be edited and
   * resubmitted as a branch. The returned request is a deep copy; mutating
   * it never touches the original entry.
   */
  branchFrom(id: string): { request: EditJobRequest; maskPng: Uint8Array | null; parentId: string } {
    const entry = this.get(id);
    if (!entry) throw new Error(`unknown entry ${id}`);
    return {
      request: cloneRequest(entry.request),
      maskPng: entry.maskPng ? entry.maskPng.slice() : null,
      parentId: entry.id,
    };
  }
}

export function describeRequest(req: EditJobRequest): string {
  if (req.mode === "roi-content") {
    const n = req.dest_rects?.length ?? 0;
    return `roi-content (${n} dest rect${n === 1 ? "" : "s"})`;
  }
  const prompt = (req.prompt ?? "").trim();
  const short = prompt.length > 32 ? prompt.slice(0, 29) + "..." : prompt;
  return `${req.mode}: ${short || "(no prompt)"}`;
}
