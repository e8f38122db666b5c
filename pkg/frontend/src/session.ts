// Pure session state: one image, an ordered log of prompt runs.  All
// view rendering derives from this data, so the whole UI state can be
// rebuilt (or exported/imported) from the session alone.

export interface PromptRun {
  id: number;
  prompt: string;
  count: number;
  roundedCount: number;
  overlayDataUrl: string | null;
  timestamp: number; // epoch ms
  latencyMs: number;
}

export interface QuerySession {
  imageName: string;
  imageDataUrl: string;
  runs: PromptRun[];
  nextId: number;
}

/** Nearest integer with halves rounding up; counts are nonnegative. */
export function roundCount(count: number): number {
  return Math.floor(count + 0.5);
}

export function createSession(imageName: string, imageDataUrl: string): QuerySession {
  return { imageName, imageDataUrl, runs: [], nextId: 1 };
}

export interface RunInput {
  prompt: string;
  count: number;
  overlayDataUrl: string | null;
  timestamp: number;
  latencyMs: number;
}

/** Append a run; the session is immutable so a new object is returned. */
export function addRun(session: QuerySession, input: RunInput): QuerySession {
  const last = session.runs[session.runs.length - 1];
  if (last && input.timestamp < last.timestamp) {
    throw new Error('runs must be appended in time order');
  }
  const run: PromptRun = {
    id: session.nextId,
    prompt: input.prompt,
    count: input.count,
    roundedCount: roundCount(input.count),
    overlayDataUrl: input.overlayDataUrl,
    timestamp: input.timestamp,
    latencyMs: input.latencyMs,
  };
  return {
    ...session,
    runs: [...session.runs, run],
    nextId: session.nextId + 1,
  };
}

export function getRun(session: QuerySession, id: number): PromptRun | undefined {
  return session.runs.find((r) => r.id === id);
}

/** Distinct existing run ids, in selection order (duplicates dropped). */
export function dedupeSelection(session: QuerySession, ids: number[]): number[] {
  const seen = new Set<number>();
  const out: number[] = [];
  for (const id of ids) {
    if (seen.has(id)) continue;
    if (!getRun(session, id)) continue;
    seen.add(id);
    out.push(id);
  }
  return out;
}

export function canCompare(session: QuerySession, ids: number[]): boolean {
  return dedupeSelection(session, ids).length >= 2;
}

export function exportSession(session: QuerySession): string {
  return JSON.stringify(session, null, 2);
}

export function importSession(json: string): QuerySession {
  const raw = JSON.parse(json) as QuerySession;
  if (typeof raw.imageDataUrl !== 'string' || !Array.isArray(raw.runs)) {
    throw new Error('not a session export');
  }
  for (let i = 1; i < raw.runs.length; i++) {
    if (raw.runs[i].timestamp < raw.runs[i - 1].timestamp) {
      throw new Error('session log out of time order');
    }
  }
  return raw;
}
