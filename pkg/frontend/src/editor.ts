/**
 * SVG canvas editor for one edit session.
 *
 * Every gesture maps onto exactly one change call: dropping a job sends
 * add_job with the drop coordinates, releasing a dragged job sends move_job,
 * dragging from an output port onto an input port sends add_connection, and
 * so on. The canvas itself is a mirror of the server session: changes are
 * drawn only after the service acknowledged them, and the mirror digest is
 * checked against the acknowledged digest every time.
 *
 * Error handling follows the protocol: a stale revision means another
 * writer got there first, so the editor refetches the session and replays
 * the gesture's intent once; a rule rejection renders the service's message
 * at the cursor and leaves the canvas untouched.
 */

import { ApiClient, RuleError, StaleRevisionError } from "./api.js";
import { textToBase64 } from "./canonical.js";
import { CanvasMirror, type MirrorJob, type MirrorPort } from "./mirror.js";
import { pollRun, stateColor } from "./status.js";
import type {
  Binding,
  ChangeKind,
  ChangePayloads,
  ChangeResult,
  EditorMode,
  Finding,
  PortKind,
  RunInfo,
  RunJobState,
  SessionInfo,
} from "./types.js";

export const JOB_W = 150;
export const JOB_H = 64;
export const PORT_R = 6;

const SVG_NS = "http://www.w3.org/2000/svg";
const MESSAGE_TTL_MS = 4000;

interface JobDrag {
  kind: "job";
  jobId: number;
  offsetX: number;
  offsetY: number;
  x: number;
  y: number;
  moved: boolean;
}

interface PortDrag {
  kind: "port";
  jobId: number;
  portId: number;
  portKind: PortKind;
  line: SVGPathElement;
}

type Selection = { kind: "job"; id: number } | { kind: "connection"; id: number } | null;

export interface EditorOptions {
  /** Called after every acknowledged change with the service's result and
   * the digest the local mirror recomputed; the two must agree. */
  onAck?: (result: ChangeResult, localDigest: string) => void;
  /** Called when a run snapshot arrives while polling. */
  onRunUpdate?: (run: RunInfo) => void;
}

export class WorkflowEditor {
  readonly client: ApiClient;
  readonly sessionId: string;
  mirror: CanvasMirror;
  revision: number;
  mode: EditorMode = "graph";
  selection: Selection = null;

  private readonly root: HTMLElement;
  private readonly doc: Document;
  private readonly options: EditorOptions;
  private svg!: SVGSVGElement;
  private connectionsLayer!: SVGGElement;
  private jobsLayer!: SVGGElement;
  private toolbar!: HTMLElement;
  private titleEl!: HTMLElement;
  private statusPanel!: HTMLElement;
  private dialogLayer!: HTMLElement;
  private modeButton!: HTMLButtonElement;

  private placing = false;
  private drag: JobDrag | PortDrag | null = null;
  private suppressClickJob: number | null = null;
  private jobCounter = 0;
  private runStates = new Map<string, RunJobState>();
  // one protocol call in flight at a time, in gesture order
  private chain: Promise<unknown> = Promise.resolve();

  constructor(root: HTMLElement, client: ApiClient, session: SessionInfo, options: EditorOptions = {}) {
    this.root = root;
    this.doc = root.ownerDocument;
    this.client = client;
    this.options = options;
    this.sessionId = session.session_id;
    this.revision = session.revision;
    this.mirror = new CanvasMirror(session.state);
    this.buildDom();
    this.render();
  }

  // -- DOM scaffolding -----------------------------------------------------

  private buildDom(): void {
    this.root.classList.add("editor");
    this.root.innerHTML = "";

    this.toolbar = this.el("div", "toolbar");
    this.titleEl = this.el("span", "workflow-title");
    this.toolbar.appendChild(this.titleEl);
    this.button("Add job", () => {
      this.placing = true;
    });
    this.button("Add input port", () => this.guard(this.addPortToSelection("input")));
    this.button("Add output port", () => this.guard(this.addPortToSelection("output")));
    this.button("Delete", () => this.guard(this.deleteSelection()));
    this.modeButton = this.button("Mode: graph", () => this.toggleMode());
    this.button("Validate", () => this.guard(this.validate()));
    this.button("Save", () => this.guard(this.save()));
    this.button("Submit", () => this.guard(this.submit()));
    this.root.appendChild(this.toolbar);

    this.svg = this.doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.svg.setAttribute("class", "canvas");
    this.svg.setAttribute("width", "1200");
    this.svg.setAttribute("height", "700");

    const defs = this.doc.createElementNS(SVG_NS, "defs");
    const marker = this.doc.createElementNS(SVG_NS, "marker");
    marker.setAttribute("id", "arrow");
    marker.setAttribute("viewBox", "0 0 10 10");
    marker.setAttribute("refX", "9");
    marker.setAttribute("refY", "5");
    marker.setAttribute("markerWidth", "7");
    marker.setAttribute("markerHeight", "7");
    marker.setAttribute("orient", "auto-start-reverse");
    const tip = this.doc.createElementNS(SVG_NS, "path");
    tip.setAttribute("d", "M 0 0 L 10 5 L 0 10 z");
    tip.setAttribute("class", "arrow-tip");
    marker.appendChild(tip);
    defs.appendChild(marker);
    this.svg.appendChild(defs);

    this.connectionsLayer = this.doc.createElementNS(SVG_NS, "g") as SVGGElement;
    this.connectionsLayer.setAttribute("class", "connections");
    this.jobsLayer = this.doc.createElementNS(SVG_NS, "g") as SVGGElement;
    this.jobsLayer.setAttribute("class", "jobs");
    this.svg.appendChild(this.connectionsLayer);
    this.svg.appendChild(this.jobsLayer);
    this.root.appendChild(this.svg);

    this.statusPanel = this.el("div", "status-panel");
    this.root.appendChild(this.statusPanel);
    this.dialogLayer = this.el("div", "dialog-layer");
    this.root.appendChild(this.dialogLayer);

    this.svg.addEventListener("pointerdown", (ev) => this.onPointerDown(ev as MouseEvent));
    this.svg.addEventListener("pointermove", (ev) => this.onPointerMove(ev as MouseEvent));
    this.svg.addEventListener("pointerup", (ev) => this.onPointerUp(ev as MouseEvent));
    this.svg.addEventListener("dblclick", (ev) => this.onDoubleClick(ev as MouseEvent));
    this.svg.addEventListener("click", (ev) => this.onClick(ev as MouseEvent));
    this.doc.addEventListener("keydown", (ev) => {
      if ((ev.key === "Delete" || ev.key === "Backspace") && this.selection !== null) {
        this.guard(this.deleteSelection());
      }
    });
  }

  private el(tag: string, className: string): HTMLElement {
    const node = this.doc.createElement(tag);
    node.className = className;
    return node;
  }

  private button(label: string, onClick: () => void): HTMLButtonElement {
    const btn = this.doc.createElement("button");
    btn.type = "button";
    btn.textContent = label;
    btn.addEventListener("click", onClick);
    this.toolbar.appendChild(btn);
    return btn;
  }

  /** Event handlers cannot await; surface transport failures inline instead
      of leaving a rejected promise behind. */
  private guard(work: Promise<unknown>): void {
    void work.catch((err: unknown) => {
      this.showMessage(err instanceof Error ? err.message : String(err));
    });
  }

  // -- rendering -------------------------------------------------------------

  render(): void {
    this.titleEl.textContent = `${this.mirror.name} (rev ${this.revision})`;
    this.modeButton.textContent = `Mode: ${this.mode}`;
    this.connectionsLayer.innerHTML = "";
    this.jobsLayer.innerHTML = "";

    for (const conn of this.mirror.connections.values()) {
      const from = this.portCenter(conn.from_job, conn.from_port);
      const to = this.portCenter(conn.to_job, conn.to_port);
      if (from === null || to === null) continue;
      const path = this.doc.createElementNS(SVG_NS, "path");
      path.setAttribute("class", "connection" + (this.isSelected("connection", conn.id) ? " selected" : ""));
      path.setAttribute("d", this.edgePath(from.x, from.y, to.x, to.y));
      path.setAttribute("marker-end", "url(#arrow)");
      path.setAttribute("data-conn", String(conn.id));
      this.connectionsLayer.appendChild(path);
    }

    for (const job of this.mirror.jobs.values()) {
      this.jobsLayer.appendChild(this.renderJob(job));
    }
  }

  private renderJob(job: MirrorJob): SVGGElement {
    const g = this.doc.createElementNS(SVG_NS, "g") as SVGGElement;
    g.setAttribute("class", "job" + (this.isSelected("job", job.id) ? " selected" : ""));
    g.setAttribute("transform", `translate(${job.x}, ${job.y})`);
    g.setAttribute("data-job", String(job.id));

    const body = this.doc.createElementNS(SVG_NS, "rect");
    body.setAttribute("class", "job-body");
    body.setAttribute("width", String(JOB_W));
    body.setAttribute("height", String(JOB_H));
    body.setAttribute("rx", "6");
    body.setAttribute("data-job", String(job.id));
    const runState = this.runStates.get(job.name);
    if (runState !== undefined) {
      body.setAttribute("fill", stateColor(runState));
    }
    g.appendChild(body);

    const name = this.doc.createElementNS(SVG_NS, "text");
    name.setAttribute("class", "job-name");
    name.setAttribute("x", String(JOB_W / 2));
    name.setAttribute("y", "22");
    name.setAttribute("text-anchor", "middle");
    name.setAttribute("data-job", String(job.id));
    name.textContent = job.name;
    g.appendChild(name);

    if (this.mode === "workflow") {
      const badge = this.doc.createElementNS(SVG_NS, "text");
      badge.setAttribute("class", "job-config-badge");
      badge.setAttribute("x", String(JOB_W / 2));
      badge.setAttribute("y", "42");
      badge.setAttribute("text-anchor", "middle");
      badge.setAttribute("data-job", String(job.id));
      badge.textContent = job.config === null ? "unconfigured" : job.config.executable;
      g.appendChild(badge);
    }

    for (const [port, center] of this.portLayout(job)) {
      const dot = this.doc.createElementNS(SVG_NS, "circle");
      dot.setAttribute("class", `port port-${port.kind}`);
      dot.setAttribute("cx", String(center.x - job.x));
      dot.setAttribute("cy", String(center.y - job.y));
      dot.setAttribute("r", String(PORT_R));
      dot.setAttribute("data-job", String(job.id));
      dot.setAttribute("data-port", String(port.id));
      dot.setAttribute("data-kind", port.kind);
      g.appendChild(dot);

      const label = this.doc.createElementNS(SVG_NS, "text");
      label.setAttribute("class", "port-label");
      label.setAttribute("x", String(center.x - job.x + (port.kind === "input" ? 10 : -10)));
      label.setAttribute("y", String(center.y - job.y + 3));
      label.setAttribute("text-anchor", port.kind === "input" ? "start" : "end");
      label.textContent = port.name;
      g.appendChild(label);
    }
    return g;
  }

  /** Ports on the node perimeter: inputs down the left edge, outputs down
   * the right, each side ordered by seq. */
  private portLayout(job: MirrorJob): Array<[MirrorPort, { x: number; y: number }]> {
    const out: Array<[MirrorPort, { x: number; y: number }]> = [];
    for (const kind of ["input", "output"] as const) {
      const side = [...job.ports.values()]
        .filter((p) => p.kind === kind)
        .sort((a, b) => a.seq - b.seq || a.id - b.id);
      const step = JOB_H / (side.length + 1);
      side.forEach((port, index) => {
        out.push([
          port,
          { x: job.x + (kind === "input" ? 0 : JOB_W), y: job.y + step * (index + 1) },
        ]);
      });
    }
    return out;
  }

  private portCenter(jobId: number, portId: number): { x: number; y: number } | null {
    const job = this.mirror.jobs.get(jobId);
    if (job === undefined) return null;
    for (const [port, center] of this.portLayout(job)) {
      if (port.id === portId) return center;
    }
    return null;
  }

  private edgePath(sx: number, sy: number, tx: number, ty: number): string {
    return `M ${sx} ${sy} C ${sx + 40} ${sy}, ${tx - 40} ${ty}, ${tx} ${ty}`;
  }

  private isSelected(kind: "job" | "connection", id: number): boolean {
    return this.selection !== null && this.selection.kind === kind && this.selection.id === id;
  }

  // -- pointer gestures -------------------------------------------------------

  private canvasPoint(ev: MouseEvent): { x: number; y: number } {
    const rect = this.svg.getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  }

  private attrOn(ev: Event, name: string): string | null {
    let node = ev.target as Element | null;
    while (node !== null && node !== (this.svg as Element)) {
      const value = node.getAttribute?.(name);
      if (value !== null && value !== undefined) return value;
      node = node.parentNode instanceof Element ? node.parentNode : null;
    }
    return null;
  }

  private onPointerDown(ev: MouseEvent): void {
    this.suppressClickJob = null;
    const at = this.canvasPoint(ev);
    const portId = this.attrOn(ev, "data-port");
    const jobId = this.attrOn(ev, "data-job");
    const connId = this.attrOn(ev, "data-conn");

    if (this.placing && portId === null && jobId === null && connId === null) {
      this.placing = false;
      this.guard(this.addJobAt(Math.round(at.x), Math.round(at.y)));
      return;
    }

    if (portId !== null && jobId !== null) {
      const kind = this.attrOn(ev, "data-kind") as PortKind;
      const line = this.doc.createElementNS(SVG_NS, "path") as SVGPathElement;
      line.setAttribute("class", "pending-connection");
      line.setAttribute("d", this.edgePath(at.x, at.y, at.x, at.y));
      this.svg.appendChild(line);
      this.drag = { kind: "port", jobId: Number(jobId), portId: Number(portId), portKind: kind, line };
      return;
    }

    if (jobId !== null) {
      const job = this.mirror.jobs.get(Number(jobId));
      if (job === undefined) return;
      this.selection = { kind: "job", id: job.id };
      this.drag = {
        kind: "job",
        jobId: job.id,
        offsetX: at.x - job.x,
        offsetY: at.y - job.y,
        x: job.x,
        y: job.y,
        moved: false,
      };
      this.render();
      return;
    }

    if (connId !== null) {
      this.selection = { kind: "connection", id: Number(connId) };
      this.render();
      return;
    }

    this.selection = null;
    this.render();
  }

  private onPointerMove(ev: MouseEvent): void {
    if (this.drag === null) return;
    const at = this.canvasPoint(ev);
    if (this.drag.kind === "job") {
      this.drag.x = Math.max(0, Math.round(at.x - this.drag.offsetX));
      this.drag.y = Math.max(0, Math.round(at.y - this.drag.offsetY));
      this.drag.moved = true;
      const g = this.jobsLayer.querySelector(`g[data-job="${this.drag.jobId}"]`);
      g?.setAttribute("transform", `translate(${this.drag.x}, ${this.drag.y})`);
    } else {
      const start = this.portCenter(this.drag.jobId, this.drag.portId);
      if (start !== null) {
        this.drag.line.setAttribute("d", this.edgePath(start.x, start.y, at.x, at.y));
      }
    }
  }

  private onPointerUp(ev: MouseEvent): void {
    const drag = this.drag;
    this.drag = null;
    if (drag === null) return;

    if (drag.kind === "job") {
      if (drag.moved) {
        // the browser follows this pointerup with a click on the same job
        this.suppressClickJob = drag.jobId;
        this.guard(this.change("move_job", { job: drag.jobId, x: drag.x, y: drag.y }));
      }
      return;
    }

    this.suppressClickJob = drag.jobId;
    drag.line.remove();
    const at = this.canvasPoint(ev);
    const portId = this.attrOn(ev, "data-port");
    const jobId = this.attrOn(ev, "data-job");
    if (portId === null || jobId === null) return;
    const targetJob = Number(jobId);
    const targetPort = Number(portId);
    if (targetJob === drag.jobId && targetPort === drag.portId) return;

    const targetKind = this.attrOn(ev, "data-kind") as PortKind;
    let payload: ChangePayloads["add_connection"];
    if (drag.portKind === "input" && targetKind === "output") {
      // dragging backwards is a natural gesture; flip it into a valid edge
      payload = { from_job: targetJob, from_port: targetPort, to_job: drag.jobId, to_port: drag.portId };
    } else {
      payload = { from_job: drag.jobId, from_port: drag.portId, to_job: targetJob, to_port: targetPort };
    }
    this.guard(this.change("add_connection", payload, at));
  }

  private onDoubleClick(ev: MouseEvent): void {
    const jobId = this.attrOn(ev, "data-job");
    if (jobId === null) return;
    const job = this.mirror.jobs.get(Number(jobId));
    if (job !== undefined) this.openRenameDialog(job);
  }

  private onClick(ev: MouseEvent): void {
    const dragged = this.suppressClickJob;
    this.suppressClickJob = null;
    if (this.mode !== "workflow") return;
    if (this.attrOn(ev, "data-port") !== null) return;
    const jobId = this.attrOn(ev, "data-job");
    if (jobId === null || Number(jobId) === dragged) return;
    const job = this.mirror.jobs.get(Number(jobId));
    if (job !== undefined) this.openConfigDialog(job);
  }

  // -- gesture intents ---------------------------------------------------------

  async addJobAt(x: number, y: number, name?: string): Promise<ChangeResult | null> {
    const jobName = name ?? this.nextJobName();
    return this.change("add_job", { name: jobName, x: Math.max(0, x), y: Math.max(0, y) });
  }

  private nextJobName(): string {
    const taken = new Set([...this.mirror.jobs.values()].map((j) => j.name));
    for (;;) {
      this.jobCounter += 1;
      const candidate = `job${this.jobCounter}`;
      if (!taken.has(candidate)) return candidate;
    }
  }

  /** Next free seq on the job; the name follows the seq so both stay unique. */
  addPortToSelection(kind: PortKind): Promise<ChangeResult | null> {
    if (this.selection === null || this.selection.kind !== "job") {
      this.showMessage("select a job first");
      return Promise.resolve(null);
    }
    return this.addPort(this.selection.id, kind);
  }

  async addPort(jobId: number, kind: PortKind): Promise<ChangeResult | null> {
    const job = this.mirror.jobs.get(jobId);
    if (job === undefined) return null;
    const ports = [...job.ports.values()];
    const names = new Set(ports.map((p) => p.name));
    let seq = ports.reduce((acc, p) => Math.max(acc, p.seq), -1) + 1;
    let name = `${kind === "input" ? "in" : "out"}${seq}`;
    while (names.has(name)) {
      seq += 1;
      name = `${kind === "input" ? "in" : "out"}${seq}`;
    }
    return this.change("add_port", { job: jobId, name, seq, kind });
  }

  async deleteSelection(): Promise<void> {
    const selection = this.selection;
    if (selection === null) return;
    this.selection = null;
    if (selection.kind === "job") {
      await this.change("remove_job", { job: selection.id });
    } else {
      await this.change("remove_connection", { connection: selection.id });
    }
  }

  toggleMode(): void {
    // presentation only: switches dialogs and the validation report
    this.mode = this.mode === "graph" ? "workflow" : "graph";
    this.render();
  }

  async validate(): Promise<Finding[]> {
    const report = await this.enqueue(() => this.client.validateSession(this.sessionId, this.mode));
    this.renderFindings(report.findings);
    return report.findings;
  }

  async save(): Promise<{ graph: string; workflow: string } | null> {
    try {
      const saved = await this.enqueue(() => this.client.saveSession(this.sessionId));
      this.showMessage(`saved workflow ${saved.workflow}`);
      return saved;
    } catch (err) {
      if (err instanceof RuleError) {
        this.showMessage(this.ruleText(err));
        this.renderFindings(err.findings);
        return null;
      }
      throw err;
    }
  }

  /** Save, submit, then poll the run, recoloring jobs as states arrive. */
  async submit(): Promise<RunInfo | null> {
    const saved = await this.save();
    if (saved === null) return null;
    let runId: string;
    try {
      const submitted = await this.enqueue(() => this.client.submitWorkflow(saved.workflow));
      runId = submitted.run_id;
    } catch (err) {
      if (err instanceof RuleError) {
        this.showMessage(this.ruleText(err));
        this.renderFindings(err.findings);
        return null;
      }
      throw err;
    }
    const run = await pollRun(this.client, runId, (snapshot) => {
      this.applyRunStates(snapshot);
      this.options.onRunUpdate?.(snapshot);
    });
    this.showMessage(`run ${run.run_id}: ${run.succeeded ? "finished" : "failed"}`);
    return run;
  }

  private applyRunStates(run: RunInfo): void {
    this.runStates = new Map(
      Object.entries(run.jobs).map(([name, status]) => [name, status.state]),
    );
    this.render();
  }

  async renameWorkflow(name: string): Promise<ChangeResult | null> {
    return this.change("rename_workflow", { name });
  }

  // -- dialogs -----------------------------------------------------------------

  private openDialog(className: string, x: number, y: number): HTMLElement {
    this.closeDialogs();
    const dialog = this.el("div", `dialog ${className}`);
    dialog.style.left = `${x}px`;
    dialog.style.top = `${y}px`;
    this.dialogLayer.appendChild(dialog);
    return dialog;
  }

  closeDialogs(): void {
    this.dialogLayer.innerHTML = "";
  }

  private labeled(dialog: HTMLElement, labelText: string, field: HTMLElement): void {
    const row = this.el("label", "dialog-row");
    const caption = this.el("span", "dialog-caption");
    caption.textContent = labelText;
    row.appendChild(caption);
    row.appendChild(field);
    dialog.appendChild(row);
  }

  private openRenameDialog(job: MirrorJob): void {
    const dialog = this.openDialog("rename-dialog", job.x + JOB_W + 16, job.y);
    const nameInput = this.doc.createElement("input");
    nameInput.value = job.name;
    const descInput = this.doc.createElement("input");
    descInput.value = job.description;
    this.labeled(dialog, "Name", nameInput);
    this.labeled(dialog, "Description", descInput);

    const ok = this.doc.createElement("button");
    ok.textContent = "Apply";
    ok.addEventListener("click", () => {
      const name = nameInput.value;
      const description = descInput.value;
      this.closeDialogs();
      if (name !== job.name) {
        this.guard(this.change("rename_job", { job: job.id, name }));
      }
      if (description !== job.description) {
        this.guard(this.change("set_job_description", { job: job.id, description }));
      }
    });
    const cancel = this.doc.createElement("button");
    cancel.textContent = "Cancel";
    cancel.addEventListener("click", () => this.closeDialogs());
    dialog.appendChild(ok);
    dialog.appendChild(cancel);
  }

  private openConfigDialog(job: MirrorJob): void {
    const dialog = this.openDialog("config-dialog", job.x + JOB_W + 16, job.y);

    const typeSelect = this.doc.createElement("select");
    for (const value of ["binary", "script"]) {
      const option = this.doc.createElement("option");
      option.value = value;
      option.textContent = value;
      typeSelect.appendChild(option);
    }
    typeSelect.value = job.config?.type ?? "binary";
    const execInput = this.doc.createElement("textarea");
    execInput.value = job.config?.executable ?? "";
    const argsInput = this.doc.createElement("input");
    argsInput.value = job.config?.arguments ?? "";
    const targetInput = this.doc.createElement("input");
    targetInput.value = job.config?.target ?? "local";

    this.labeled(dialog, "Type", typeSelect);
    this.labeled(dialog, "Executable", execInput);
    this.labeled(dialog, "Arguments", argsInput);
    this.labeled(dialog, "Target", targetInput);

    const apply = this.doc.createElement("button");
    apply.textContent = "Apply configuration";
    apply.addEventListener("click", () => {
      this.guard(
        this.change("set_job_config", {
          job: job.id,
          config: {
            type: typeSelect.value as "binary" | "script",
            executable: execInput.value,
            arguments: argsInput.value,
            target: targetInput.value,
          },
        }),
      );
    });
    const clear = this.doc.createElement("button");
    clear.textContent = "Clear configuration";
    clear.addEventListener("click", () => {
      this.guard(this.change("set_job_config", { job: job.id, config: null }));
    });
    dialog.appendChild(apply);
    dialog.appendChild(clear);

    for (const port of [...job.ports.values()].sort((a, b) => a.seq - b.seq || a.id - b.id)) {
      dialog.appendChild(this.bindingRow(job, port));
    }

    const close = this.doc.createElement("button");
    close.textContent = "Close";
    close.addEventListener("click", () => this.closeDialogs());
    dialog.appendChild(close);
  }

  private bindingRow(job: MirrorJob, port: MirrorPort): HTMLElement {
    const row = this.el("div", "binding-row");
    const caption = this.el("span", "dialog-caption");
    caption.textContent = `${port.kind} ${port.name}`;
    row.appendChild(caption);

    const valueInput = this.doc.createElement("input");
    let sourceSelect: HTMLSelectElement | null = null;
    if (port.kind === "output") {
      valueInput.placeholder = "output filename";
      valueInput.value = port.binding !== null && "filename" in port.binding ? port.binding.filename : "";
    } else {
      sourceSelect = this.doc.createElement("select");
      for (const value of ["none", "channel", "file", "inline"]) {
        const option = this.doc.createElement("option");
        option.value = value;
        option.textContent = value;
        sourceSelect.appendChild(option);
      }
      const binding = port.binding;
      if (binding === null) {
        sourceSelect.value = "none";
      } else if ("source" in binding) {
        sourceSelect.value = binding.source;
        if (binding.source === "file") valueInput.value = binding.path;
      }
      row.appendChild(sourceSelect);
      valueInput.placeholder = "path or inline text";
    }
    row.appendChild(valueInput);

    const apply = this.doc.createElement("button");
    apply.textContent = "Bind";
    apply.addEventListener("click", () => {
      let binding: Binding | null;
      if (port.kind === "output") {
        binding = valueInput.value === "" ? null : { filename: valueInput.value };
      } else {
        const source = sourceSelect!.value;
        binding =
          source === "none"
            ? null
            : source === "channel"
              ? { source: "channel" }
              : source === "file"
                ? { source: "file", path: valueInput.value }
                : { source: "inline", content: textToBase64(valueInput.value) };
      }
      this.guard(this.change("set_port_binding", { job: job.id, port: port.id, binding }));
    });
    row.appendChild(apply);

    const remove = this.doc.createElement("button");
    remove.textContent = "Remove port";
    remove.addEventListener("click", () => {
      row.remove();
      this.guard(this.change("remove_port", { job: job.id, port: port.id }));
    });
    row.appendChild(remove);
    return row;
  }

  // -- findings and messages -----------------------------------------------------

  private renderFindings(findings: Finding[]): void {
    this.statusPanel.innerHTML = "";
    if (findings.length === 0) {
      const line = this.el("div", "finding finding-ok");
      line.textContent = `ok (${this.mode} mode)`;
      this.statusPanel.appendChild(line);
      return;
    }
    for (const finding of findings) {
      const line = this.el("div", `finding finding-${finding.severity}`);
      line.textContent = `${finding.severity.toUpperCase()} ${finding.rule} ${finding.target} ${finding.message}`;
      this.statusPanel.appendChild(line);
    }
  }

  private ruleText(err: RuleError): string {
    return err.rule === null ? err.message : `${err.rule}: ${err.message}`;
  }

  /** Transient inline notice; placed at the cursor when coordinates are known. */
  showMessage(text: string, at?: { x: number; y: number }): HTMLElement {
    const note = this.el("div", "editor-message");
    note.textContent = text;
    if (at !== undefined) {
      note.style.left = `${at.x}px`;
      note.style.top = `${at.y}px`;
    }
    this.dialogLayer.appendChild(note);
    setTimeout(() => note.remove(), MESSAGE_TTL_MS);
    return note;
  }

  // -- protocol ---------------------------------------------------------------------

  /** All protocol calls run strictly one after another, in gesture order. */
  private enqueue<T>(task: () => Promise<T>): Promise<T> {
    const result = this.chain.then(task);
    this.chain = result.catch(() => undefined);
    return result;
  }

  /** Resolves once every protocol call queued so far has settled. */
  flush(): Promise<void> {
    return this.chain.then(() => undefined);
  }

  /**
   * Send one change. Stale revision: resync and replay the intent once.
   * Rule rejection: show the service's message, leave the canvas unchanged.
   */
  async change<K extends ChangeKind>(
    kind: K,
    payload: ChangePayloads[K],
    at?: { x: number; y: number },
  ): Promise<ChangeResult | null> {
    return this.enqueue(async () => {
      try {
        return await this.changeOnce(kind, payload);
      } catch (err) {
        if (err instanceof StaleRevisionError) {
          await this.resync();
          try {
            return await this.changeOnce(kind, payload);
          } catch (replayErr) {
            if (replayErr instanceof RuleError) {
              this.showMessage(this.ruleText(replayErr), at);
              return null;
            }
            throw replayErr;
          }
        }
        if (err instanceof RuleError) {
          this.showMessage(this.ruleText(err), at);
          return null;
        }
        throw err;
      }
    });
  }

  private async changeOnce<K extends ChangeKind>(
    kind: K,
    payload: ChangePayloads[K],
  ): Promise<ChangeResult> {
    const result = await this.client.applyChange(this.sessionId, kind, payload, this.revision);
    this.revision = result.revision;
    const localDigest = await this.mirror.applyAcknowledged(kind, payload, result);
    this.options.onAck?.(result, localDigest);
    if (localDigest !== result.digest) {
      // the mirror diverged from the authoritative cache; resync wins
      await this.resync();
    }
    this.render();
    return result;
  }

  /** Refetch the authoritative session state and rebuild the mirror. */
  private async resync(): Promise<void> {
    const session = await this.client.getSession(this.sessionId);
    this.revision = session.revision;
    this.mirror = new CanvasMirror(session.state);
    if (this.selection !== null) {
      const present =
        this.selection.kind === "job"
          ? this.mirror.jobs.has(this.selection.id)
          : this.mirror.connections.has(this.selection.id);
      if (!present) this.selection = null;
    }
    this.render();
  }
}
