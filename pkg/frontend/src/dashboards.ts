import { barChart, clear, gauge, h } from "./dom.js";
import type { CiLedger, CommitResult, FeasibilityReport } from "./types.js";

// Read-only dashboards. They render result documents produced by the batch
// jobs; nothing is recomputed here.

export function renderFeasibilityCard(root: HTMLElement, report: FeasibilityReport): void {
  clear(root);
  const card = h("section", { class: "feasibility-card" });
  card.append(h("h2", {}, ["Feasibility study"]));
  card.append(
    h("p", { class: "split-sizes" }, [
      `train n=${report.train_size}, validation n=${report.validation_size} ` +
        `(asymptotic estimates, k=${report.k})`,
    ]),
  );
  card.append(
    h("p", { class: "headline" }, [
      `Best achievable accuracy: ${(report.overall.max_accuracy * 100).toFixed(1)}% ` +
        `(embedding: ${report.overall.embedding})`,
    ]),
  );
  card.append(
    barChart(
      report.estimates.map((estimate) => ({
        label: estimate.embedding,
        value: estimate.max_accuracy,
        highlight: estimate.embedding === report.overall.embedding,
      })),
    ),
  );
  if (report.noise_sweep && report.noise_sweep.length > 0) {
    const sweep = h("div", { class: "noise-sweep" });
    sweep.append(h("h3", {}, ["Label-noise sweep"]));
    const table = h("table", { class: "sweep-table" });
    table.append(
      h("tr", {}, [h("th", {}, ["rho"]), h("th", {}, ["BER lower"]), h("th", {}, ["BER upper"])]),
    );
    for (const point of report.noise_sweep) {
      table.append(
        h("tr", {}, [
          h("td", {}, [point.rho.toFixed(2)]),
          h("td", {}, [point.ber_lower.toFixed(4)]),
          h("td", {}, [point.ber_upper.toFixed(4)]),
        ]),
      );
    }
    sweep.append(table);
    card.append(sweep);
  }
  root.append(card);
}

export function renderLedgerView(root: HTMLElement, ledger: CiLedger, last?: CommitResult): void {
  clear(root);
  const card = h("section", { class: "ledger-view" });
  card.append(h("h2", {}, ["Test-set reuse ledger"]));
  card.append(
    h("p", { class: "policy-line" }, [
      `mode ${ledger.policy.mode}, delta ${ledger.policy.delta}, ` +
        `ill-defined -> ${ledger.policy.ill_defined === "force_accept" ? "accept" : "reject"}`,
    ]),
  );
  card.append(gauge(ledger.used, ledger.policy.reuses, "test set refresh required"));
  const history = h("div", { class: "commit-history" });
  history.append(h("h3", {}, ["Commit history"]));
  if (ledger.history.length === 0) {
    history.append(h("p", { class: "history-empty" }, ["No commits evaluated yet."]));
  } else {
    const list = h("ol", { class: "history-list" });
    for (const passed of ledger.history) {
      list.append(h("li", { class: passed ? "commit-pass" : "commit-fail" }, [passed ? "pass" : "fail"]));
    }
    history.append(list);
  }
  card.append(history);
  if (last) {
    card.append(
      h("p", { class: "last-result" }, [
        last.status === "refresh_required"
          ? "Last attempt: refused, refresh required"
          : `Last commit: ${last.status}` +
            (last.score === null ? "" : ` (score ${last.score.toFixed(4)})`),
      ]),
    );
  }
  root.append(card);
}
