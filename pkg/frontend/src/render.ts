// DOM rendering: a full rebuild of #app from the store on every change.
// Cheap at console scale (a batch is ~20 rows) and keeps all state in the
// store, where the tests are.

import { chartSvg } from "./chart.js";
import type { ConsoleStore } from "./state.js";
import type { Label } from "./types.js";

export interface Actions {
  onLabel(processId: string, label: Label | null): void;
  onTogglePartial(allow: boolean): void;
  onSubmit(): void;
  onDismissNotice(): void;
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function header(store: ConsoleStore): string {
  const s = store.status;
  const line = s
    ? `iteration ${s.iteration} · labels ${s.labels_spent}/${s.budget} · ` +
      `pending ${s.pending_count}`
    : "connecting…";
  return (
    `<header><h1>flagrank triage</h1>` +
    `<div class="statusline">${esc(line)}</div></header>`
  );
}

function banners(store: ConsoleStore): string {
  let out = "";
  if (store.offline) {
    out +=
      `<div class="banner offline">Server unreachable — retrying with ` +
      `backoff…</div>`;
  }
  if (store.status?.error) {
    out += `<div class="banner error">Run failed: ${esc(store.status.error)}</div>`;
  }
  if (store.notice) {
    out +=
      `<div class="banner notice">${esc(store.notice)} ` +
      `<button data-act="dismiss">ok</button></div>`;
  }
  return out;
}

function labelingView(store: ConsoleStore): string {
  if (store.rows.length === 0) {
    return `<section class="card"><p>Fetching the pending batch…</p></section>`;
  }
  const rows = store.rows
    .map((row) => {
      const it = row.item;
      const chips = it.top_attributes
        .map((a) => `<span class="chip">${esc(a)}</span>`)
        .join("");
      const pct = Math.round(it.uncertainty * 200); // U tops out at 0.5
      const btn = (label: Label, text: string) =>
        `<button data-act="label" data-pid="${esc(it.process_id)}" ` +
        `data-label="${label}" class="${row.label === label ? "active" : ""}">` +
        `${text}</button>`;
      return (
        `<tr class="${row.flagged ? "flagged" : ""}">` +
        `<td>${it.rank}</td>` +
        `<td class="pid">${esc(it.process_id)}</td>` +
        `<td class="num">${it.score.toFixed(4)}</td>` +
        `<td><div class="ubar"><div style="width:${pct}%"></div></div></td>` +
        `<td class="chips">${chips}</td>` +
        `<td class="controls">${btn("normal", "normal")}${btn(
          "anomalous",
          "anomalous",
        )}</td>` +
        `</tr>`
      );
    })
    .join("");
  const labeled = store.selections().length;
  const tau = store.threshold;
  return (
    `<section class="card">` +
    `<h2>Pending batch — iteration ${store.queueIteration}` +
    (tau === null ? "" : ` <small>τ=${tau.toFixed(4)}</small>`) +
    `</h2>` +
    `<table><thead><tr><th>#</th><th>process</th><th>score</th>` +
    `<th>uncertainty</th><th>active attributes</th><th>label</th></tr>` +
    `</thead><tbody>${rows}</tbody></table>` +
    `<div class="submitrow">` +
    `<label><input type="checkbox" data-act="partial" ` +
    `${store.allowPartial ? "checked" : ""}/> allow partial submit</label>` +
    `<span>${labeled}/${store.rows.length} labeled</span>` +
    `<button data-act="submit" ${store.canSubmit() ? "" : "disabled"}>` +
    `Submit labels</button>` +
    `</div></section>`
  );
}

function trainingView(store: ConsoleStore): string {
  const it = store.status?.iteration ?? 0;
  return (
    `<section class="card center"><div class="spinner"></div>` +
    `<p>Retraining after iteration ${it}…</p></section>`
  );
}

function doneView(store: ConsoleStore): string {
  const s = store.status!;
  const last = store.metrics[store.metrics.length - 1];
  const final =
    last && typeof last.ndcg === "number"
      ? ` · final nDCG ${last.ndcg.toFixed(4)}`
      : "";
  return (
    `<section class="card"><h2>Run complete</h2>` +
    `<p>${s.labels_spent} labels spent over ${store.metrics.length} recorded ` +
    `iterations${final}.</p></section>`
  );
}

function dashboard(store: ConsoleStore): string {
  const series = store.chartSeries();
  let chart: string;
  if (series.kind === "empty") {
    chart = `<p class="placeholder">No metrics yet.</p>`;
  } else if (series.kind === "ndcg") {
    chart = chartSvg(
      [
        { name: "nDCG", values: series.ndcg, color: "#4a7dd4" },
        { name: "smoothed", values: series.smoothed, color: "#d48a4a" },
      ],
      "nDCG per iteration",
    );
  } else {
    chart = chartSvg(
      [
        { name: "labels spent", values: series.labelsSpent, color: "#4a7dd4" },
        { name: "threshold", values: series.threshold, color: "#d48a4a" },
      ],
      "progress per iteration",
    );
  }
  const top = store.ranking
    .map(
      (e) =>
        `<tr><td>${e.rank}</td><td class="pid">${esc(e.process_id)}</td>` +
        `<td class="num">${e.score.toFixed(4)}</td></tr>`,
    )
    .join("");
  const table = top
    ? `<table><thead><tr><th>#</th><th>process</th><th>score</th></tr>` +
      `</thead><tbody>${top}</tbody></table>`
    : `<p class="placeholder">No ranking yet.</p>`;
  return (
    `<section class="card"><h2>Progress</h2>${chart}</section>` +
    `<section class="card"><h2>Current top ranking</h2>${table}</section>`
  );
}

export function render(
  root: HTMLElement,
  store: ConsoleStore,
  actions: Actions,
): void {
  const view = store.view();
  let main: string;
  switch (view) {
    case "connecting":
      main = `<section class="card center"><p>Connecting…</p></section>`;
      break;
    case "offline":
      main = `<section class="card center"><p>Waiting for the server…</p></section>`;
      break;
    case "labeling":
      main = labelingView(store);
      break;
    case "training":
      main = trainingView(store);
      break;
    case "done":
      main = doneView(store);
      break;
  }
  root.innerHTML = header(store) + banners(store) + main + dashboard(store);

  root.querySelectorAll<HTMLElement>("[data-act=label]").forEach((el) => {
    el.addEventListener("click", () => {
      const pid = el.dataset.pid!;
      const label = el.dataset.label as Label;
      const row = store.rows.find((r) => r.item.process_id === pid);
      // clicking the active label again clears it
      actions.onLabel(pid, row && row.label === label ? null : label);
    });
  });
  root
    .querySelector<HTMLInputElement>("[data-act=partial]")
    ?.addEventListener("change", (ev) => {
      actions.onTogglePartial((ev.target as HTMLInputElement).checked);
    });
  root
    .querySelector<HTMLButtonElement>("[data-act=submit]")
    ?.addEventListener("click", () => actions.onSubmit());
  root
    .querySelector<HTMLButtonElement>("[data-act=dismiss]")
    ?.addEventListener("click", () => actions.onDismissNotice());
}
