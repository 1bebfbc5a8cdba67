import { ApiClient, ApiError } from "./api.js";
import { barChart, clear, gauge, h } from "./dom.js";
import type { LabelingMetrics, QueriedItem } from "./types.js";

// Labeling loop view: poll for the next queried item, take one label,
// render the refreshed ranking. Predictions are masked by default so the
// annotator is not anchored by the models; a toggle reveals them.
export class LabelingView {
  private readonly api: ApiClient;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private revealPredictions = false;
  private stopped = false;
  private pendingBanner: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly sessionId: string,
    baseUrl = "",
    private readonly pollMs = 1000,
  ) {
    this.api = new ApiClient(baseUrl);
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
  }

  async load(): Promise<void> {
    let metrics: LabelingMetrics;
    let item: QueriedItem | null;
    try {
      metrics = await this.api.labelingMetrics(this.sessionId);
      item = await this.api.nextQuery(this.sessionId);
      if (item !== null) metrics = await this.api.labelingMetrics(this.sessionId);
    } catch (error) {
      this.renderError(error);
      return;
    }
    this.render(metrics, item);
    if (item === null && !this.finished(metrics) && !this.stopped) {
      // nothing queried right now: poll until the stream yields or ends
      this.timer = setTimeout(() => void this.load(), this.pollMs);
    }
  }

  private finished(metrics: LabelingMetrics): boolean {
    return metrics.budget_remaining === 0 || metrics.position >= metrics.stream_length;
  }

  private render(metrics: LabelingMetrics, item: QueriedItem | null): void {
    clear(this.root);
    if (this.pendingBanner !== null) {
      this.root.append(h("div", { class: "conflict-banner", role: "alert" }, [this.pendingBanner]));
      this.pendingBanner = null;
    }
    const view = h("section", { class: "labeling-view", "data-version": String(metrics.version) });
    view.append(h("h2", {}, [`Labeling session ${metrics.session_id}`]));
    view.append(this.budgetPanel(metrics));
    if (item !== null) {
      view.append(this.queryPanel(metrics, item));
    } else if (this.finished(metrics)) {
      view.append(this.completionPanel(metrics));
    } else {
      view.append(h("p", { class: "waiting" }, ["Scanning the stream for an informative item..."]));
    }
    view.append(this.rankingPanel(metrics));
    this.root.append(view);
  }

  private budgetPanel(metrics: LabelingMetrics): HTMLElement {
    const used = metrics.budget - metrics.budget_remaining;
    const panel = h("div", { class: "budget-panel" });
    panel.append(h("span", {}, ["Label budget"]));
    panel.append(gauge(used, metrics.budget, "budget exhausted"));
    return panel;
  }

  private queryPanel(metrics: LabelingMetrics, item: QueriedItem): HTMLElement {
    const panel = h("div", { class: "query-panel", "data-item": item.item_id });
    panel.append(h("h3", {}, [`Label item ${item.item_id}`]));

    const predictions = h("div", { class: "model-predictions" });
    const toggle = h("button", { type: "button", class: "reveal-toggle" }, [
      this.revealPredictions ? "Hide model predictions" : "Show model predictions",
    ]);
    toggle.addEventListener("click", () => {
      this.revealPredictions = !this.revealPredictions;
      void this.load();
    });
    predictions.append(toggle);
    const list = h("ul", { class: this.revealPredictions ? "predictions" : "predictions masked" });
    item.predictions.forEach((prediction, model) => {
      list.append(
        h("li", {}, [
          this.revealPredictions
            ? `model ${model}: ${this.className(metrics, prediction)}`
            : `model ${model}: (masked)`,
        ]),
      );
    });
    predictions.append(list);
    panel.append(predictions);

    const buttons = h("div", { class: "label-buttons" });
    for (let label = 0; label < metrics.class_count; label++) {
      const button = h("button", { type: "button", class: "label-button" }, [
        this.className(metrics, label),
      ]);
      button.addEventListener("click", () => void this.submit(item, label));
      buttons.append(button);
    }
    panel.append(buttons);
    return panel;
  }

  private className(metrics: LabelingMetrics, label: number): string {
    return metrics.class_names?.[label] ?? `class ${label}`;
  }

  private completionPanel(metrics: LabelingMetrics): HTMLElement {
    const reason = metrics.budget_remaining === 0 ? "budget exhausted" : "stream complete";
    const panel = h("div", { class: "labeling-done" });
    panel.append(h("h3", {}, [`Done: ${reason}`]));
    panel.append(
      h("p", { class: "final-pick" }, [`Final pick: model ${metrics.pick}`]),
    );
    panel.append(h("p", {}, [`${metrics.queries} labels provided.`]));
    return panel;
  }

  private rankingPanel(metrics: LabelingMetrics): HTMLElement {
    const panel = h("div", { class: "ranking-panel" });
    panel.append(h("h3", {}, ["Model ranking"]));
    const rows = metrics.weights
      .map((weight, model) => ({ label: `model ${model}`, value: weight, model }))
      .sort((a, b) => b.value - a.value || a.model - b.model)
      .map((row) => ({ label: row.label, value: row.value, highlight: row.model === metrics.pick }));
    panel.append(barChart(rows));
    return panel;
  }

  private async submit(item: QueriedItem, label: number): Promise<void> {
    // disable stale forms before the round-trip: one POST per human decision
    this.root
      .querySelectorAll("button")
      .forEach((button) => button.setAttribute("disabled", ""));
    try {
      await this.api.submitLabel(this.sessionId, item.item_id, label, item.version);
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        this.pendingBanner = "session changed elsewhere, reloading";
        await this.load();
        return;
      }
      this.renderError(error);
      return;
    }
    await this.load();
  }

  private renderError(error: unknown): void {
    clear(this.root);
    const message = error instanceof Error ? error.message : String(error);
    this.root.append(h("div", { class: "error-panel" }, [`Error: ${message}`]));
  }
}
