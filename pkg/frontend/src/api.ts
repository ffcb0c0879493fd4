/**
 * Thin typed client for the service's JSON API. Every method maps onto one
 * route; error responses become typed exceptions carrying the machine codes
 * the service reports, so callers can branch on stale revisions and rule
 * rejections without string matching.
 */

import type {
  ChangeKind,
  ChangePayloads,
  ChangeResult,
  Finding,
  RunInfo,
  SessionInfo,
  WorkflowState,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The session moved on; refetch and replay the intent. */
export class StaleRevisionError extends ApiError {
  constructor(
    status: number,
    message: string,
    readonly revision: number,
    readonly expected: number,
  ) {
    super(status, "stale_revision", message);
    this.name = "StaleRevisionError";
  }
}

/** The rule engine refused the change or submission; the state is unchanged. */
export class RuleError extends ApiError {
  constructor(
    status: number,
    code: string,
    message: string,
    readonly rule: string | null,
    readonly findings: Finding[],
  ) {
    super(status, code, message);
    this.name = "RuleError";
  }
}

const RULE_CODES = new Set(["validation_error", "submit_rejected", "invalid_workflow"]);

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  /** `fetchImpl` is injectable so tests can run outside a browser. */
  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "") + "/api/v1";
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
    rawBody?: string,
  ): Promise<unknown> {
    const init: RequestInit = { method };
    if (rawBody !== undefined) {
      init.body = rawBody;
      init.headers = { "Content-Type": "application/xml" };
    } else if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const response = await this.fetchImpl(this.base + path, init);
    const isXml = (response.headers.get("content-type") ?? "").includes("xml");
    if (response.ok) {
      return isXml ? response.text() : response.json();
    }

    let detail: Record<string, unknown> = {};
    try {
      detail = (await response.json()) as Record<string, unknown>;
    } catch {
      // non-JSON error body; fall through with what we have
    }
    const code = typeof detail.code === "string" ? detail.code : "http_error";
    const message = typeof detail.message === "string" ? detail.message : response.statusText;
    if (code === "stale_revision") {
      throw new StaleRevisionError(
        response.status,
        message,
        detail.revision as number,
        detail.expected as number,
      );
    }
    if (RULE_CODES.has(code)) {
      throw new RuleError(
        response.status,
        code,
        message,
        (detail.rule as string | undefined) ?? null,
        (detail.findings as Finding[] | undefined) ?? [],
      );
    }
    throw new ApiError(response.status, code, message);
  }

  // -- sessions ----------------------------------------------------------

  createSession(source: {
    name?: string;
    from_workflow?: string;
    from_graph?: string;
  }): Promise<SessionInfo> {
    return this.request("POST", "/sessions", source) as Promise<SessionInfo>;
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.request("GET", `/sessions/${sessionId}`) as Promise<SessionInfo>;
  }

  closeSession(sessionId: string): Promise<{ closed: string }> {
    return this.request("DELETE", `/sessions/${sessionId}`) as Promise<{ closed: string }>;
  }

  applyChange<K extends ChangeKind>(
    sessionId: string,
    kind: K,
    payload: ChangePayloads[K],
    expectedRevision: number,
  ): Promise<ChangeResult> {
    return this.request("POST", `/sessions/${sessionId}/changes`, {
      kind,
      payload,
      expected_revision: expectedRevision,
    }) as Promise<ChangeResult>;
  }

  validateSession(sessionId: string, mode: "graph" | "workflow"): Promise<{ findings: Finding[] }> {
    return this.request("POST", `/sessions/${sessionId}/validate?mode=${mode}`) as Promise<{
      findings: Finding[];
    }>;
  }

  saveSession(sessionId: string): Promise<{ graph: string; workflow: string }> {
    return this.request("POST", `/sessions/${sessionId}/save`) as Promise<{
      graph: string;
      workflow: string;
    }>;
  }

  // -- stored documents ----------------------------------------------------

  listGraphs(): Promise<{ graphs: string[] }> {
    return this.request("GET", "/graphs") as Promise<{ graphs: string[] }>;
  }

  listWorkflows(): Promise<{ workflows: string[] }> {
    return this.request("GET", "/workflows") as Promise<{ workflows: string[] }>;
  }

  getWorkflow(name: string): Promise<WorkflowState> {
    return this.request("GET", `/workflows/${name}`) as Promise<WorkflowState>;
  }

  exportWorkflow(name: string): Promise<string> {
    return this.request("GET", `/export/${name}`) as Promise<string>;
  }

  importWorkflow(document: string): Promise<{ workflow: string; graph: string }> {
    return this.request("POST", "/import", undefined, document) as Promise<{
      workflow: string;
      graph: string;
    }>;
  }

  validateDocument(
    document: string,
    mode: "graph" | "workflow",
  ): Promise<{ findings: Finding[] }> {
    return this.request("POST", `/validate?mode=${mode}`, undefined, document) as Promise<{
      findings: Finding[];
    }>;
  }

  // -- execution -----------------------------------------------------------

  submitWorkflow(name: string): Promise<{ run_id: string }> {
    return this.request("POST", `/workflows/${name}/submit`) as Promise<{ run_id: string }>;
  }

  getRun(runId: string): Promise<RunInfo> {
    return this.request("GET", `/runs/${runId}`) as Promise<RunInfo>;
  }
}
