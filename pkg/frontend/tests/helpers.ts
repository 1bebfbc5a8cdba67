// Shared fixtures for the e2e suites: upload artifacts and create sessions
// against the live service started by tests/setup.ts.
import { ApiClient } from "../src/api.js";
import type { CleaningMetrics, LabelingMetrics } from "../src/types.js";

export async function putArtifact(baseUrl: string, content: string): Promise<string> {
  const api = new ApiClient(baseUrl);
  const { ref } = await api.putArtifact(content);
  return ref;
}

/** Two decisive cells, one per validation point; two repairs reach certainty. */
export async function createCleaningFixture(baseUrl: string): Promise<CleaningMetrics> {
  const api = new ApiClient(baseUrl);
  const dirtyCsv = ["f0,label", "?,a", "1.0,b", "?,a", "51.0,b", ""].join("\n");
  const candidates = JSON.stringify({
    candidates: { "0,0": [0.1, 5.0], "2,0": [49.5, 60.0] },
  });
  const validation = "f0\n0.0\n50.0\n";
  return api.createCleaningSession({
    dataset: await putArtifact(baseUrl, dirtyCsv),
    candidates: await putArtifact(baseUrl, candidates),
    validation: await putArtifact(baseUrl, validation),
  });
}

export interface LabelingFixture {
  metrics: LabelingMetrics;
  truths: Map<string, number>;
}

/** Model 1 is right on every disagreeing item; truths keyed by item id. */
export async function createLabelingFixture(
  baseUrl: string,
  options: { budget?: number; items?: number; seed?: number } = {},
): Promise<LabelingFixture> {
  const api = new ApiClient(baseUrl);
  const count = options.items ?? 12;
  const rows = ["item_id,pred_model_0,pred_model_1"];
  const truths = new Map<string, number>();
  for (let i = 0; i < count; i++) {
    const truth = i % 2;
    const disagree = i % 3 !== 2; // two thirds of the stream is informative
    const model0 = disagree ? 1 - truth : truth;
    rows.push(`item-${i},${model0},${truth}`);
    truths.set(`item-${i}`, truth);
  }
  rows.push("");
  const metrics = await api.createLabelingSession({
    stream: await putArtifact(baseUrl, rows.join("\n")),
    budget: options.budget ?? 4,
    seed: options.seed ?? 7,
  });
  return { metrics, truths };
}

export function mountRoot(): HTMLElement {
  const root = document.createElement("main");
  document.body.append(root);
  return root;
}

/** Wait until the root's rendered markup satisfies a predicate. */
export async function until(
  check: () => boolean,
  timeoutMs = 10000,
  stepMs = 25,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (check()) return;
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
  throw new Error("condition not reached in time");
}
