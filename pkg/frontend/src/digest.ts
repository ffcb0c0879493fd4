/** SHA-256 hex digests over UTF-8 text, in browsers and in Node tests. */

import { digestText } from "./canonical.js";
import type { WorkflowState } from "./types.js";

type SubtleLike = { digest(alg: string, data: BufferSource): Promise<ArrayBuffer> };

let subtlePromise: Promise<SubtleLike> | null = null;

// browsers provide crypto.subtle; Node test runners go through node:crypto
function getSubtle(): Promise<SubtleLike> {
  if (subtlePromise !== null) return subtlePromise;
  const subtle = globalThis.crypto?.subtle;
  subtlePromise = subtle
    ? Promise.resolve(subtle as SubtleLike)
    : import("node:crypto").then((mod) => mod.webcrypto.subtle as SubtleLike);
  return subtlePromise;
}

export async function sha256Hex(textValue: string): Promise<string> {
  const subtle = await getSubtle();
  const buffer = await subtle.digest("SHA-256", new TextEncoder().encode(textValue));
  return [...new Uint8Array(buffer)].map((b) => b.toString(16).padStart(2, "0")).join("");
}

/** State digest as the service computes it: canonical bytes, timestamps zeroed. */
export function stateDigest(state: WorkflowState): Promise<string> {
  return sha256Hex(digestText(state));
}
