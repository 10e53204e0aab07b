// JSON shapes of the oracle service API, transcribed field-for-field.

export type Phase = "training" | "awaiting_labels" | "done";

export interface StatusResponse {
  phase: Phase;
  iteration: number;
  labels_spent: number;
  budget: number;
  budget_left: number;
  pending_count: number;
  error: string | null;
}

export interface QueryItem {
  process_id: string;
  score: number;
  rank: number;
  uncertainty: number;
  top_attributes: string[];
}

export interface QueriesResponse {
  iteration: number;
  threshold: number;
  items: QueryItem[];
}

export type Label = "normal" | "anomalous";

export interface LabelItem {
  process_id: string;
  label: Label;
}

export interface LabelsResponse {
  accepted: number;
  outstanding: number;
}

export interface RankingEntry {
  rank: number;
  process_id: string;
  score: number;
}

export interface RankingResponse {
  iteration: number;
  entries: RankingEntry[];
}

// One line of the metrics series; ndcg fields are absent on truth-less runs.
export interface MetricsRecord {
  iteration: number;
  ndcg?: number;
  ndcg_smoothed?: number;
  threshold: number;
  labels_spent: number;
  pool_normal: number;
  pool_anomalous: number;
  pool_synthetic: number;
  mean_loss: number;
}

export interface MetricsResponse {
  records: MetricsRecord[];
}
