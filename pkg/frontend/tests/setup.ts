// Global setup: launch the real dqops HTTP service for the e2e suites.
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import type { TestProject } from "vitest/node";

async function waitForService(baseUrl: string, child: ChildProcess): Promise<void> {
  const deadline = Date.now() + 60000;
  let exited = false;
  child.on("exit", () => {
    exited = true;
  });
  while (Date.now() < deadline) {
    if (exited) throw new Error("service process exited during startup");
    try {
      const response = await fetch(`${baseUrl}/openapi.json`);
      if (response.ok) return;
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`service did not come up at ${baseUrl}`);
}

export default async function setup(project: TestProject): Promise<() => Promise<void>> {
  const port = 20000 + Math.floor(Math.random() * 20000);
  const baseUrl = `http://127.0.0.1:${port}`;
  const dataDir = mkdtempSync(join(tmpdir(), "dqops-ui-test-"));
  const child = spawn(
    "python3",
    [
      "-m",
      "uvicorn",
      "--factory",
      "dqops.service:create_app",
      "--host",
      "127.0.0.1",
      "--port",
      String(port),
      "--log-level",
      "warning",
    ],
    {
      env: { ...process.env, DQOPS_DATA_DIR: dataDir },
      stdio: ["ignore", "inherit", "inherit"],
    },
  );
  await waitForService(baseUrl, child);
  project.provide("baseUrl", baseUrl);
  return async () => {
    child.kill("SIGTERM");
    await new Promise((resolve) => setTimeout(resolve, 200));
    if (child.exitCode === null) child.kill("SIGKILL");
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    baseUrl: string;
  }
}
