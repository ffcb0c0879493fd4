/**
 * Canonical XML rendering of a workflow state, byte-identical to what the
 * service writes. The editor never parses XML; it only needs to reproduce
 * the exact serialization so its SHA-256 state digest can be compared with
 * the digest the service returns after every acknowledged change.
 */

import type { WorkflowState, JobInfo, PortInfo, ConnectionInfo } from "./types.js";

export const EPOCH_TS = "1970-01-01T00:00:00Z";

const FORMAT_VERSION = "1";

/** Escape an attribute value; whitespace travels as character references. */
function attr(value: string): string {
  const escaped = value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("\t", "&#9;")
    .replaceAll("\n", "&#10;")
    .replaceAll("\r", "&#13;");
  return `"${escaped}"`;
}

function text(value: string): string {
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll("\r", "&#13;");
}

const B64_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

/** Standard base64 with padding; works on raw bytes, no Buffer/btoa needed. */
export function bytesToBase64(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const b0 = bytes[i]!;
    const b1 = i + 1 < bytes.length ? bytes[i + 1]! : 0;
    const b2 = i + 2 < bytes.length ? bytes[i + 2]! : 0;
    out += B64_ALPHABET[b0 >> 2]!;
    out += B64_ALPHABET[((b0 & 0x03) << 4) | (b1 >> 4)]!;
    out += i + 1 < bytes.length ? B64_ALPHABET[((b1 & 0x0f) << 2) | (b2 >> 6)]! : "=";
    out += i + 2 < bytes.length ? B64_ALPHABET[b2 & 0x3f]! : "=";
  }
  return out;
}

/** Decode standard base64 (padding required, no whitespace). */
export function base64ToBytes(encoded: string): Uint8Array {
  if (encoded.length % 4 !== 0) {
    throw new Error("base64 length must be a multiple of 4");
  }
  const pad = encoded.endsWith("==") ? 2 : encoded.endsWith("=") ? 1 : 0;
  const bytes = new Uint8Array((encoded.length / 4) * 3 - pad);
  let w = 0;
  for (let i = 0; i < encoded.length; i += 4) {
    const vals: number[] = [];
    for (let j = 0; j < 4; j++) {
      const ch = encoded[i + j]!;
      if (ch === "=") {
        // "=" legal only as the final one or two characters
        const lastQuad = i + 4 >= encoded.length;
        const validSlot = j === 3 || (j === 2 && encoded[i + 3] === "=");
        if (!lastQuad || !validSlot) {
          throw new Error("misplaced base64 padding");
        }
        vals.push(0);
        continue;
      }
      const v = B64_ALPHABET.indexOf(ch);
      if (v < 0) throw new Error(`invalid base64 character ${JSON.stringify(ch)}`);
      vals.push(v);
    }
    const triple = (vals[0]! << 18) | (vals[1]! << 12) | (vals[2]! << 6) | vals[3]!;
    if (w < bytes.length) bytes[w++] = (triple >> 16) & 0xff;
    if (w < bytes.length) bytes[w++] = (triple >> 8) & 0xff;
    if (w < bytes.length) bytes[w++] = triple & 0xff;
  }
  return bytes;
}

export function textToBase64(value: string): string {
  return bytesToBase64(new TextEncoder().encode(value));
}

/**
 * Compare strings by Unicode code point, matching how the service orders
 * names. Plain `<` on JS strings compares UTF-16 code units, which disagrees
 * for characters outside the basic plane.
 */
export function codePointCompare(a: string, b: string): number {
  const ia = a[Symbol.iterator]();
  const ib = b[Symbol.iterator]();
  for (;;) {
    const ra = ia.next();
    const rb = ib.next();
    if (ra.done && rb.done) return 0;
    if (ra.done) return -1;
    if (rb.done) return 1;
    const ca = ra.value.codePointAt(0)!;
    const cb = rb.value.codePointAt(0)!;
    if (ca !== cb) return ca - cb;
  }
}

function jobOrder(a: JobInfo, b: JobInfo): number {
  return codePointCompare(a.name, b.name) || a.id - b.id;
}

function portOrder(a: PortInfo, b: PortInfo): number {
  return a.seq - b.seq || codePointCompare(a.name, b.name) || a.id - b.id;
}

function connectionOrder(a: ConnectionInfo, b: ConnectionInfo): number {
  return (
    a.from_job - b.from_job ||
    a.from_port - b.from_port ||
    a.to_job - b.to_job ||
    a.to_port - b.to_port ||
    a.id - b.id
  );
}

/**
 * Render canonical XML text for a workflow state. Element order is fully
 * determined by the state: jobs by (name, id), ports by (seq, name, id),
 * connections by endpoint ids. The result of `new TextEncoder().encode()`
 * on this string equals the document bytes the service produces.
 */
export function canonicalText(state: WorkflowState): string {
  const jobs = [...state.graph.jobs].sort(jobOrder);
  const connections = [...state.graph.connections].sort(connectionOrder);

  const out: string[] = ['<?xml version="1.0" encoding="UTF-8"?>'];
  out.push(
    `<workflow fmt=${attr(FORMAT_VERSION)} name=${attr(state.name)}` +
      ` graph=${attr(state.graph_name)}` +
      ` created=${attr(state.created)}` +
      ` modified=${attr(state.modified)}>`,
  );

  const graphOpen = `  <graph name=${attr(state.graph.name)} description=${attr(state.graph.description)}`;
  if (jobs.length === 0 && connections.length === 0) {
    out.push(graphOpen + "/>");
  } else {
    out.push(graphOpen + ">");
    for (const job of jobs) {
      const ports = [...job.ports].sort(portOrder);
      const jobOpen =
        `    <job id=${attr(String(job.id))} name=${attr(job.name)}` +
        ` description=${attr(job.description)}` +
        ` x=${attr(String(job.x))} y=${attr(String(job.y))}`;
      if (ports.length === 0) {
        out.push(jobOpen + "/>");
      } else {
        out.push(jobOpen + ">");
        for (const port of ports) {
          out.push(
            `      <port id=${attr(String(port.id))} name=${attr(port.name)}` +
              ` seq=${attr(String(port.seq))} kind=${attr(port.kind)}/>`,
          );
        }
        out.push("    </job>");
      }
    }
    for (const conn of connections) {
      out.push(
        `    <connection id=${attr(String(conn.id))}` +
          ` fromJob=${attr(String(conn.from_job))}` +
          ` fromPort=${attr(String(conn.from_port))}` +
          ` toJob=${attr(String(conn.to_job))}` +
          ` toPort=${attr(String(conn.to_port))}/>`,
      );
    }
    out.push("  </graph>");
  }

  const configLines: string[] = [];
  for (const job of jobs) {
    if (job.config === null) continue;
    const cfg = job.config;
    const encoding = cfg.type === "script" ? "base64" : "text";
    const execText = cfg.type === "script" ? textToBase64(cfg.executable) : text(cfg.executable);
    configLines.push(
      `    <jobconfig job=${attr(String(job.id))}` +
        ` type=${attr(cfg.type)} target=${attr(cfg.target)}>`,
    );
    configLines.push(`      <exec encoding=${attr(encoding)}>${execText}</exec>`);
    configLines.push(cfg.arguments ? `      <args>${text(cfg.arguments)}</args>` : "      <args/>");
    configLines.push("    </jobconfig>");
  }
  for (const job of jobs) {
    for (const port of [...job.ports].sort(portOrder)) {
      const binding = port.binding;
      if (binding === null) continue;
      let source: string;
      let value: string;
      if ("filename" in binding) {
        source = "file";
        value = binding.filename;
      } else if (binding.source === "file") {
        source = "file";
        value = binding.path;
      } else if (binding.source === "inline") {
        source = "inline";
        value = binding.content;
      } else {
        source = "channel";
        value = "";
      }
      configLines.push(
        `    <binding job=${attr(String(job.id))} port=${attr(String(port.id))}` +
          ` source=${attr(source)} value=${attr(value)}/>`,
      );
    }
  }
  if (configLines.length > 0) {
    out.push("  <config>");
    out.push(...configLines);
    out.push("  </config>");
  }

  out.push("</workflow>");
  return out.join("\n") + "\n";
}

/** The digest input: canonical text with both timestamps zeroed. */
export function digestText(state: WorkflowState): string {
  return canonicalText({ ...state, created: EPOCH_TS, modified: EPOCH_TS });
}
