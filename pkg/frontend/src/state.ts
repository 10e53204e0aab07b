// All console behavior that is worth testing lives here, DOM-free.
//
// The store is a plain state machine: status polls, queue loads, label
// clicks, and submit outcomes go in; the view name, submit enablement, and
// chart series come out.  Rendering reads the store and nothing else, so a
// detached console with identical HTTP payloads is exactly equivalent.

import type {
  Label,
  LabelItem,
  MetricsRecord,
  QueriesResponse,
  QueryItem,
  RankingEntry,
  StatusResponse,
} from "./types.js";

export type View = "connecting" | "offline" | "training" | "labeling" | "done";

export interface QueueRow {
  item: QueryItem;
  label: Label | null;
  flagged: boolean; // highlighted after a 422 named this id
}

export type ChartSeries =
  | { kind: "empty" }
  | { kind: "ndcg"; ndcg: number[]; smoothed: number[] }
  | { kind: "fallback"; labelsSpent: number[]; threshold: number[] };

export class ConsoleStore {
  status: StatusResponse | null = null;
  offline = false;
  notice: string | null = null;

  queueIteration: number | null = null;
  threshold: number | null = null;
  rows: QueueRow[] = [];
  allowPartial = false;

  metrics: MetricsRecord[] = [];
  ranking: RankingEntry[] = [];

  // --- polling inputs -----------------------------------------------------

  applyStatus(status: StatusResponse): void {
    this.status = status;
    this.offline = false;
    if (status.phase !== "awaiting_labels") {
      // the pending batch is gone; local labels were either consumed or moot
      this.queueIteration = null;
      this.threshold = null;
      this.rows = [];
    }
  }

  setOffline(): void {
    this.offline = true;
  }

  /** True when the labeling view needs a (re)fetch of /api/queries. */
  needsQueue(): boolean {
    return (
      this.status !== null &&
      this.status.phase === "awaiting_labels" &&
      this.queueIteration !== this.status.iteration
    );
  }

  /**
   * Install a pending batch.  Labels already chosen locally are kept for
   * every id that survives into the new batch — a stale-iteration refresh
   * must not discard human work.
   */
  loadQueue(batch: QueriesResponse): void {
    const kept = new Map<string, Label>();
    for (const row of this.rows) {
      if (row.label !== null) {
        kept.set(row.item.process_id, row.label);
      }
    }
    this.queueIteration = batch.iteration;
    this.threshold = batch.threshold;
    this.rows = batch.items.map((item) => ({
      item,
      label: kept.get(item.process_id) ?? null,
      flagged: false,
    }));
  }

  // --- labeling -----------------------------------------------------------

  setLabel(processId: string, label: Label | null): void {
    for (const row of this.rows) {
      if (row.item.process_id === processId) {
        row.label = label;
        row.flagged = false;
      }
    }
  }

  selections(): LabelItem[] {
    return this.rows
      .filter((row) => row.label !== null)
      .map((row) => ({ process_id: row.item.process_id, label: row.label! }));
  }

  allLabeled(): boolean {
    return this.rows.length > 0 && this.rows.every((r) => r.label !== null);
  }

  /** Submit is enabled only for a fully labeled batch, unless the user has
   * explicitly opted into a partial submission (and at least one label is
   * chosen either way). */
  canSubmit(): boolean {
    if (this.selections().length === 0) {
      return false;
    }
    return this.allLabeled() || this.allowPartial;
  }

  flagOffenders(ids: string[]): void {
    const bad = new Set(ids);
    for (const row of this.rows) {
      if (bad.has(row.item.process_id)) {
        row.flagged = true;
      }
    }
  }

  noteStaleBatch(): void {
    this.notice =
      "The batch changed while you were labeling; it has been refreshed. " +
      "Labels for processes still pending were kept.";
    this.queueIteration = null; // force a refetch on the next poll
  }

  clearNotice(): void {
    this.notice = null;
  }

  // --- dashboard ----------------------------------------------------------

  applyMetrics(records: MetricsRecord[]): void {
    this.metrics = records;
  }

  applyRanking(entries: RankingEntry[]): void {
    this.ranking = entries;
  }

  /** nDCG curve when the service computed one for every iteration, a
   * labels/threshold fallback when it did not, placeholder when empty. */
  chartSeries(): ChartSeries {
    if (this.metrics.length === 0) {
      return { kind: "empty" };
    }
    if (this.metrics.every((r) => typeof r.ndcg === "number")) {
      return {
        kind: "ndcg",
        ndcg: this.metrics.map((r) => r.ndcg!),
        smoothed: this.metrics.map((r) => r.ndcg_smoothed ?? r.ndcg!),
      };
    }
    return {
      kind: "fallback",
      labelsSpent: this.metrics.map((r) => r.labels_spent),
      threshold: this.metrics.map((r) => r.threshold),
    };
  }

  // --- view selection -----------------------------------------------------

  view(): View {
    if (this.status === null) {
      return this.offline ? "offline" : "connecting";
    }
    if (this.offline) {
      return "offline";
    }
    switch (this.status.phase) {
      case "training":
        return "training";
      case "awaiting_labels":
        return "labeling";
      case "done":
        return "done";
    }
  }
}
