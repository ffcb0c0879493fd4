/** Spawns a real service instance for browser-level tests. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { setTimeout as delay } from "node:timers/promises";

export interface TestServer {
  baseUrl: string;
  storeDir: string;
  stop: () => Promise<void>;
}

const READY_TIMEOUT_MS = 15_000;

async function waitReady(child: ChildProcess, baseUrl: string, logs: string[]): Promise<void> {
  const deadline = Date.now() + READY_TIMEOUT_MS;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`service exited with ${child.exitCode}:\n${logs.join("")}`);
    }
    try {
      const response = await fetch(`${baseUrl}/api/v1/workflows`);
      if (response.ok) return;
    } catch {
      // not listening yet
    }
    await delay(100);
  }
  throw new Error(`service not ready after ${READY_TIMEOUT_MS}ms:\n${logs.join("")}`);
}

export async function startServer(): Promise<TestServer> {
  const storeDir = mkdtempSync(join(tmpdir(), "flowctl-ui-"));
  const port = 20000 + Math.floor(Math.random() * 20000);
  const baseUrl = `http://127.0.0.1:${port}`;
  const child = spawn(
    "python3",
    ["-m", "flowctl.cli", "serve", "--host", "127.0.0.1", "--port", String(port), "--store", storeDir],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const logs: string[] = [];
  child.stdout?.on("data", (chunk: Buffer) => logs.push(chunk.toString()));
  child.stderr?.on("data", (chunk: Buffer) => logs.push(chunk.toString()));

  await waitReady(child, baseUrl, logs);

  return {
    baseUrl,
    storeDir,
    stop: async () => {
      child.kill("SIGTERM");
      await new Promise<void>((resolve) => {
        const force = setTimeout(() => {
          child.kill("SIGKILL");
          resolve();
        }, 3000);
        child.once("exit", () => {
          clearTimeout(force);
          resolve();
        });
      });
      rmSync(storeDir, { recursive: true, force: true });
    },
  };
}
