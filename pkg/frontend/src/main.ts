import { ApiClient } from "./api.js";
import { CleaningView } from "./cleaning.js";
import { renderFeasibilityCard, renderLedgerView } from "./dashboards.js";
import { clear, h } from "./dom.js";
import { LabelingView } from "./labeling.js";
import type { CommitResult, FeasibilityReport } from "./types.js";

// Hash router. The whole app state is the location hash plus whatever the
// service returns; a reload lands on the same view.
//   #/cleaning/<session>   #/labeling/<session>
//   #/feasibility/<job>    #/ci/<job>

let active: { stop?: () => void } | null = null;

function route(root: HTMLElement, baseUrl: string): void {
  if (active?.stop) active.stop();
  active = null;
  const [, kind, id] = window.location.hash.split("/");
  if (kind === "cleaning" && id) {
    const view = new CleaningView(root, id, baseUrl);
    active = {};
    void view.load();
    return;
  }
  if (kind === "labeling" && id) {
    const view = new LabelingView(root, id, baseUrl);
    active = { stop: () => view.stop() };
    void view.load();
    return;
  }
  if ((kind === "feasibility" || kind === "ci") && id) {
    void renderJob(root, baseUrl, kind, id);
    return;
  }
  renderHome(root, baseUrl);
}

async function renderJob(
  root: HTMLElement,
  baseUrl: string,
  kind: "feasibility" | "ci",
  jobId: string,
): Promise<void> {
  const api = new ApiClient(baseUrl);
  const job = await api.job(jobId);
  clear(root);
  if (job.status === "pending") {
    root.append(h("p", { class: "waiting" }, [`Job ${jobId} is still running...`]));
    setTimeout(() => void renderJob(root, baseUrl, kind, jobId), 1000);
    return;
  }
  if (job.status === "error") {
    root.append(h("div", { class: "error-panel" }, [`Job failed: ${job.error ?? "unknown"}`]));
    return;
  }
  if (kind === "feasibility") {
    renderFeasibilityCard(root, job.result as FeasibilityReport);
  } else {
    const result = job.result as CommitResult;
    renderLedgerView(root, result.ledger, result);
  }
}

function renderHome(root: HTMLElement, baseUrl: string): void {
  clear(root);
  const home = h("section", { class: "home" });
  home.append(h("h2", {}, ["dqops annotation console"]));
  home.append(
    h("p", {}, [
      "Open a session or job by id, or navigate directly to " +
        "#/cleaning/<id>, #/labeling/<id>, #/feasibility/<job>, #/ci/<job>.",
    ]),
  );
  const form = h("div", { class: "open-form" });
  const select = h("select", { class: "kind-select" });
  for (const kind of ["cleaning", "labeling", "feasibility", "ci"]) {
    select.append(h("option", { value: kind }, [kind]));
  }
  const input = h("input", { type: "text", placeholder: "session or job id" }) as HTMLInputElement;
  const go = h("button", { type: "button" }, ["Open"]);
  go.addEventListener("click", () => {
    const id = input.value.trim();
    if (id) window.location.hash = `#/${(select as HTMLSelectElement).value}/${id}`;
  });
  form.append(select, input, go);
  home.append(form);
  root.append(home);
}

export function mountApp(root: HTMLElement, baseUrl = ""): void {
  window.addEventListener("hashchange", () => route(root, baseUrl));
  route(root, baseUrl);
}

declare global {
  interface Window {
    DQOPS_BASE_URL?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(document.getElementById("app") as HTMLElement, window.DQOPS_BASE_URL ?? "");
}
