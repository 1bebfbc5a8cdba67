// Payload shapes of the dqops service JSON API. The UI renders these
// verbatim: every number shown on screen was computed server-side.

export type Cell = [number, number];

export interface CleaningMetrics {
  session_id: string;
  version: number;
  world_count: number;
  entropy: number;
  certain_count: number;
  validation_count: number;
  dirty_count: number;
  entropy_trace: number[];
}

export interface Suggestion {
  cell: Cell;
  candidates: number[];
  conditional_entropy: number;
  version: number;
  record: Array<number | null>;
  record_label: string;
}

export interface RepairResult extends CleaningMetrics {
  cell: Cell;
}

export interface LabelingMetrics {
  session_id: string;
  version: number;
  m: number;
  pick: number;
  weights: number[];
  budget: number;
  budget_remaining: number;
  class_count: number;
  class_names: string[] | null;
  stream_length: number;
  position: number;
  queries: number;
  pending_item: string | null;
}

export interface QueriedItem {
  item_id: string;
  predictions: number[];
  version: number;
  budget_remaining: number;
}

export interface BerEstimate {
  embedding: string;
  knn_error: number;
  ber_lower: number;
  ber_upper: number;
  max_accuracy: number;
}

export interface FeasibilityReport {
  estimates: BerEstimate[];
  overall: BerEstimate;
  train_size: number;
  validation_size: number;
  k: number;
  inversion: string;
  noise_sweep?: Array<BerEstimate & { rho: number }>;
  noise_placement?: string;
}

export interface ReusePolicy {
  reuses: number;
  delta: number;
  mode: string;
  ill_defined: string;
}

export interface CiLedger {
  policy: ReusePolicy;
  used: number;
  history: boolean[];
  fingerprint: string;
}

export interface CommitResult {
  status: "pass" | "fail" | "refresh_required";
  condition: string | null;
  score: number | null;
  variables: { n: number; o: number; d: number } | null;
  ledger: CiLedger;
}

export interface JobStatus {
  job_id: string;
  status: "pending" | "done" | "error";
  result: unknown;
  error: string | null;
}
