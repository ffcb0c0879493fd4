/**
 * Client-side mirror of a server edit session.
 *
 * The mirror applies each change locally only after the service acknowledged
 * it, folding in the server-assigned ids and cascaded removals from the
 * acknowledgment. Recomputing the canonical digest after every application
 * and comparing it with the acknowledged digest proves the canvas still
 * matches the server's cache; any mismatch means the mirror must resync.
 */

import { base64ToBytes, bytesToBase64 } from "./canonical.js";
import { stateDigest } from "./digest.js";
import type {
  Binding,
  ChangeKind,
  ChangePayloads,
  ChangeResult,
  ConnectionInfo,
  JobConfigInfo,
  PortInfo,
  PortKind,
  WorkflowState,
} from "./types.js";

export interface MirrorPort {
  readonly id: number;
  name: string;
  seq: number;
  readonly kind: PortKind;
  binding: Binding | null;
}

export interface MirrorJob {
  readonly id: number;
  name: string;
  description: string;
  x: number;
  y: number;
  readonly ports: Map<number, MirrorPort>;
  config: JobConfigInfo | null;
}

/** Re-encode inline payloads so the mirror holds the same canonical base64
 * the service will write back out. */
function normalizeBinding(binding: Binding | null): Binding | null {
  if (binding !== null && "source" in binding && binding.source === "inline") {
    return { source: "inline", content: bytesToBase64(base64ToBytes(binding.content)) };
  }
  return binding;
}

export class CanvasMirror {
  name: string;
  graphName: string;
  graphDescription: string;
  created: string;
  modified: string;
  readonly jobs = new Map<number, MirrorJob>();
  readonly connections = new Map<number, ConnectionInfo>();

  constructor(state: WorkflowState) {
    this.name = state.name;
    this.graphName = state.graph_name;
    this.graphDescription = state.graph.description;
    this.created = state.created;
    this.modified = state.modified;
    for (const job of state.graph.jobs) {
      const ports = new Map<number, MirrorPort>();
      for (const port of job.ports) {
        ports.set(port.id, { ...port });
      }
      this.jobs.set(job.id, {
        id: job.id,
        name: job.name,
        description: job.description,
        x: job.x,
        y: job.y,
        ports,
        config: job.config === null ? null : { ...job.config },
      });
    }
    for (const conn of state.graph.connections) {
      this.connections.set(conn.id, { ...conn });
    }
  }

  job(jobId: number): MirrorJob {
    const job = this.jobs.get(jobId);
    if (job === undefined) throw new Error(`mirror has no job ${jobId}`);
    return job;
  }

  port(jobId: number, portId: number): MirrorPort {
    const port = this.job(jobId).ports.get(portId);
    if (port === undefined) throw new Error(`mirror has no port ${portId} on job ${jobId}`);
    return port;
  }

  /** The plain state shape the canonical serializer consumes. */
  toState(): WorkflowState {
    const jobs = [...this.jobs.values()].map((job) => ({
      id: job.id,
      name: job.name,
      description: job.description,
      x: job.x,
      y: job.y,
      ports: [...job.ports.values()].map((port): PortInfo => ({ ...port })),
      config: job.config === null ? null : { ...job.config },
    }));
    return {
      name: this.name,
      graph_name: this.graphName,
      created: this.created,
      modified: this.modified,
      digest: "",
      graph: {
        name: this.graphName,
        description: this.graphDescription,
        jobs,
        connections: [...this.connections.values()].map((conn) => ({ ...conn })),
      },
    };
  }

  digest(): Promise<string> {
    return stateDigest(this.toState());
  }

  /**
   * Fold one acknowledged change into the mirror and return the recomputed
   * local digest. `result` is the service's acknowledgment: `created_id`
   * names entities the change created, `cascaded_removals` lists every id
   * the service dropped alongside the change.
   */
  async applyAcknowledged<K extends ChangeKind>(
    kind: K,
    payload: ChangePayloads[K],
    result: ChangeResult,
  ): Promise<string> {
    this.applyLocal(kind, payload, result);
    return this.digest();
  }

  private applyLocal<K extends ChangeKind>(
    kind: K,
    payload: ChangePayloads[K],
    result: ChangeResult,
  ): void {
    switch (kind) {
      case "add_job": {
        const p = payload as ChangePayloads["add_job"];
        if (result.created_id === null) throw new Error("add_job ack carries no created id");
        this.jobs.set(result.created_id, {
          id: result.created_id,
          name: p.name,
          description: p.description ?? "",
          x: p.x,
          y: p.y,
          ports: new Map(),
          config: null,
        });
        break;
      }
      case "remove_job": {
        const p = payload as ChangePayloads["remove_job"];
        this.job(p.job);
        this.jobs.delete(p.job);
        this.dropCascaded(result.cascaded_removals);
        break;
      }
      case "move_job": {
        const p = payload as ChangePayloads["move_job"];
        const job = this.job(p.job);
        job.x = p.x;
        job.y = p.y;
        break;
      }
      case "rename_job": {
        const p = payload as ChangePayloads["rename_job"];
        this.job(p.job).name = p.name;
        break;
      }
      case "set_job_description": {
        const p = payload as ChangePayloads["set_job_description"];
        this.job(p.job).description = p.description;
        break;
      }
      case "add_port": {
        const p = payload as ChangePayloads["add_port"];
        if (result.created_id === null) throw new Error("add_port ack carries no created id");
        this.job(p.job).ports.set(result.created_id, {
          id: result.created_id,
          name: p.name,
          seq: p.seq,
          kind: p.kind,
          binding: null,
        });
        break;
      }
      case "remove_port": {
        const p = payload as ChangePayloads["remove_port"];
        this.port(p.job, p.port);
        this.job(p.job).ports.delete(p.port);
        this.dropCascaded(result.cascaded_removals);
        break;
      }
      case "change_port_config": {
        const p = payload as ChangePayloads["change_port_config"];
        const port = this.port(p.job, p.port);
        if ("name" in p && p.name !== undefined) port.name = p.name;
        if ("seq" in p && p.seq !== undefined) port.seq = p.seq;
        if ("binding" in p) port.binding = normalizeBinding(p.binding ?? null);
        break;
      }
      case "add_connection": {
        const p = payload as ChangePayloads["add_connection"];
        if (result.created_id === null) throw new Error("add_connection ack carries no created id");
        this.connections.set(result.created_id, { id: result.created_id, ...p });
        break;
      }
      case "remove_connection": {
        const p = payload as ChangePayloads["remove_connection"];
        if (!this.connections.delete(p.connection)) {
          throw new Error(`mirror has no connection ${p.connection}`);
        }
        break;
      }
      case "set_job_config": {
        const p = payload as ChangePayloads["set_job_config"];
        const job = this.job(p.job);
        job.config =
          p.config === null
            ? null
            : {
                type: p.config.type,
                executable: p.config.executable,
                arguments: p.config.arguments ?? "",
                target: p.config.target ?? "local",
              };
        break;
      }
      case "set_port_binding": {
        const p = payload as ChangePayloads["set_port_binding"];
        this.port(p.job, p.port).binding = normalizeBinding(p.binding);
        break;
      }
      case "rename_workflow": {
        const p = payload as ChangePayloads["rename_workflow"];
        this.name = p.name;
        break;
      }
      default: {
        const exhaustive: never = kind;
        throw new Error(`unknown change kind ${String(exhaustive)}`);
      }
    }
  }

  /** Connections die with their endpoints; the ack names every casualty. */
  private dropCascaded(ids: readonly number[]): void {
    for (const id of ids) {
      this.connections.delete(id);
    }
  }
}
