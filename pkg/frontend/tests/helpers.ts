import { EPOCH_TS } from "../src/canonical.js";
import type { WorkflowState } from "../src/types.js";

/** The state the service hands out for a freshly opened empty workflow. */
export function emptyState(name: string): WorkflowState {
  return {
    name,
    graph_name: name,
    created: EPOCH_TS,
    modified: EPOCH_TS,
    digest: "",
    graph: { name, description: "", jobs: [], connections: [] },
  };
}
