/** Run-state presentation and polling. */

import type { ApiClient } from "./api.js";
import type { RunInfo, RunJobState } from "./types.js";

export const STATE_COLORS: Record<RunJobState, string> = {
  init: "#9e9e9e",
  running: "#1976d2",
  finished: "#2e7d32",
  error: "#c62828",
};

export function stateColor(state: RunJobState): string {
  return STATE_COLORS[state] ?? STATE_COLORS.init;
}

/**
 * Poll a run until it is done, reporting each snapshot so the canvas can
 * recolor jobs as they move. Resolves with the final record; rejects only
 * on transport errors (a failed run still resolves).
 */
export function pollRun(
  client: ApiClient,
  runId: string,
  onUpdate: (run: RunInfo) => void,
  intervalMs = 250,
): Promise<RunInfo> {
  return new Promise((resolve, reject) => {
    const poll = setInterval(async () => {
      try {
        const run = await client.getRun(runId);
        onUpdate(run);
        if (run.done) {
          clearInterval(poll);
          resolve(run);
        }
      } catch (err) {
        clearInterval(poll);
        reject(err);
      }
    }, intervalMs);
  });
}
