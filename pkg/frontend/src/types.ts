/** JSON shapes exchanged with the service, mirrored one to one. */

export type PortKind = "input" | "output";

export type Binding =
  | { filename: string } // output: declared result file
  | { source: "channel" } // input: fed by a connection
  | { source: "file"; path: string } // input: absolute path on the host
  | { source: "inline"; content: string }; // input: base64 payload

export interface JobConfigInfo {
  type: "binary" | "script";
  executable: string;
  arguments: string;
  target: string;
}

export interface PortInfo {
  id: number;
  name: string;
  seq: number;
  kind: PortKind;
  binding: Binding | null;
}

export interface JobInfo {
  id: number;
  name: string;
  description: string;
  x: number;
  y: number;
  ports: PortInfo[];
  config: JobConfigInfo | null;
}

export interface ConnectionInfo {
  id: number;
  from_job: number;
  from_port: number;
  to_job: number;
  to_port: number;
}

export interface WorkflowState {
  name: string;
  graph_name: string;
  created: string;
  modified: string;
  digest: string;
  graph: {
    name: string;
    description: string;
    jobs: JobInfo[];
    connections: ConnectionInfo[];
  };
}

export interface SessionInfo {
  session_id: string;
  revision: number;
  digest: string;
  state: WorkflowState;
}

/** Config as sent in change payloads; the service fills the defaults. */
export interface JobConfigPayload {
  type: "binary" | "script";
  executable: string;
  arguments?: string;
  target?: string;
}

/** Payload shape for each change kind, exactly as the service decodes it. */
export interface ChangePayloads {
  add_job: { name: string; description?: string; x: number; y: number };
  remove_job: { job: number };
  move_job: { job: number; x: number; y: number };
  rename_job: { job: number; name: string };
  set_job_description: { job: number; description: string };
  add_port: { job: number; name: string; seq: number; kind: PortKind };
  remove_port: { job: number; port: number };
  change_port_config: {
    job: number;
    port: number;
    name?: string;
    seq?: number;
    binding?: Binding | null;
  };
  add_connection: { from_job: number; from_port: number; to_job: number; to_port: number };
  remove_connection: { connection: number };
  set_job_config: { job: number; config: JobConfigPayload | null };
  set_port_binding: { job: number; port: number; binding: Binding | null };
  rename_workflow: { name: string };
}

export type ChangeKind = keyof ChangePayloads;

export interface ChangeResult {
  revision: number;
  digest: string;
  created_id: number | null;
  cascaded_removals: number[];
}

export interface Finding {
  rule: string;
  severity: "error" | "warning";
  target: string;
  message: string;
}

export type RunJobState = "init" | "running" | "finished" | "error";

export interface RunInfo {
  run_id: string;
  workflow: string;
  digest: string;
  started: string;
  finished: string | null;
  done: boolean;
  succeeded: boolean;
  jobs: Record<string, { state: RunJobState; detail: string }>;
  transitions: {
    seq: number;
    job: string;
    state: RunJobState;
    detail: string;
    at: string;
  }[];
}

export type EditorMode = "graph" | "workflow";
