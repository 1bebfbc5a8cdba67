import { ApiClient, ApiError } from "./api.js";
import { clear, h, sparkline } from "./dom.js";
import type { CleaningMetrics, Suggestion } from "./types.js";

// Cleaning loop view: render the suggested cell, take one human decision,
// refresh. Everything on screen comes from the two GET endpoints, so a hard
// refresh reconstructs the exact same view.
export class CleaningView {
  private readonly api: ApiClient;
  private pendingBanner: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly sessionId: string,
    baseUrl = "",
  ) {
    this.api = new ApiClient(baseUrl);
  }

  async load(): Promise<void> {
    let metrics: CleaningMetrics;
    let suggestion: Suggestion | null;
    try {
      metrics = await this.api.cleaningMetrics(this.sessionId);
      suggestion = await this.api.suggestion(this.sessionId);
    } catch (error) {
      this.renderError(error);
      return;
    }
    this.render(metrics, suggestion);
  }

  private render(metrics: CleaningMetrics, suggestion: Suggestion | null): void {
    clear(this.root);
    if (this.pendingBanner !== null) {
      this.root.append(h("div", { class: "conflict-banner", role: "alert" }, [this.pendingBanner]));
      this.pendingBanner = null;
    }
    const view = h("section", { class: "cleaning-view", "data-version": String(metrics.version) });
    view.append(h("h2", {}, [`Cleaning session ${metrics.session_id}`]));
    view.append(this.metricsPanel(metrics));
    view.append(
      suggestion === null ? this.completionPanel(metrics) : this.suggestionPanel(suggestion),
    );
    this.root.append(view);
  }

  private metricsPanel(metrics: CleaningMetrics): HTMLElement {
    const panel = h("div", { class: "metrics-panel" });
    const certain = h("p", { class: "certain-count" }, [
      `Certain predictions: ${metrics.certain_count} / ${metrics.validation_count}`,
    ]);
    const uncertain = h("p", { class: "uncertain-count" }, [
      `Uncertain: ${metrics.validation_count - metrics.certain_count}`,
    ]);
    const entropy = h("p", { class: "entropy-now" }, [
      `Prediction entropy: ${metrics.entropy.toFixed(6)} bits`,
    ]);
    const worlds = h("p", { class: "world-count" }, [
      `Possible worlds: ${metrics.world_count}, dirty cells: ${metrics.dirty_count}`,
    ]);
    const trace = h("div", { class: "entropy-trace" });
    trace.append(sparkline(metrics.entropy_trace));
    panel.append(certain, uncertain, entropy, worlds, trace);
    return panel;
  }

  private completionPanel(metrics: CleaningMetrics): HTMLElement {
    const panel = h("div", { class: "all-certain" });
    panel.append(h("h3", {}, ["All predictions are certain"]));
    panel.append(
      h("p", {}, [
        `Every validation prediction is now identical in all remaining worlds; ` +
          `${metrics.dirty_count} dirty cell(s) left can be skipped.`,
      ]),
    );
    return panel;
  }

  private suggestionPanel(suggestion: Suggestion): HTMLElement {
    const [row, col] = suggestion.cell;
    const panel = h("div", { class: "suggestion-panel", "data-cell": `${row},${col}` });
    panel.append(h("h3", {}, [`Clean record ${row}, feature f${col}`]));
    panel.append(
      h("p", { class: "conditional-entropy" }, [
        `Expected entropy after this repair: ${suggestion.conditional_entropy.toFixed(6)} bits`,
      ]),
    );
    panel.append(this.recordPreview(suggestion));
    panel.append(this.repairForm(suggestion));
    return panel;
  }

  private recordPreview(suggestion: Suggestion): HTMLElement {
    const table = h("table", { class: "record-preview" });
    const header = h("tr", {});
    const cells = h("tr", {});
    suggestion.record.forEach((value, index) => {
      header.append(h("th", {}, [`f${index}`]));
      const isTarget = index === suggestion.cell[1];
      cells.append(
        h("td", { class: isTarget ? "missing-cell" : "" }, [
          value === null ? (isTarget ? "?" : "(missing)") : String(value),
        ]),
      );
    });
    header.append(h("th", {}, ["label"]));
    cells.append(h("td", {}, [suggestion.record_label]));
    table.append(header, cells);
    return table;
  }

  private repairForm(suggestion: Suggestion): HTMLElement {
    const form = h("div", { class: "repair-form" });
    const chips = h("div", { class: "candidate-chips" });
    for (const candidate of suggestion.candidates) {
      const chip = h("button", { class: "chip", type: "button" }, [String(candidate)]);
      chip.addEventListener("click", () => void this.submit(suggestion, candidate));
      chips.append(chip);
    }
    form.append(chips);

    const free = h("div", { class: "free-entry" });
    const input = h("input", {
      type: "text",
      class: "free-entry-input",
      placeholder: "other value",
    }) as HTMLInputElement;
    const apply = h("button", { type: "button", class: "free-entry-submit" }, ["Repair"]);
    const problem = h("span", { class: "validation-error", hidden: "" });
    apply.addEventListener("click", () => {
      const value = Number(input.value.trim());
      if (input.value.trim() === "" || !Number.isFinite(value)) {
        problem.textContent = "Enter a finite number";
        problem.removeAttribute("hidden");
        return;
      }
      problem.setAttribute("hidden", "");
      void this.submit(suggestion, value);
    });
    free.append(input, apply, problem);
    form.append(free);
    return form;
  }

  private async submit(suggestion: Suggestion, value: number): Promise<void> {
    this.root
      .querySelectorAll("button")
      .forEach((button) => button.setAttribute("disabled", ""));
    try {
      await this.api.submitRepair(this.sessionId, suggestion.cell, value, suggestion.version);
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
