// Wiring: 2-second status polling (with backoff while offline), dashboard
// refreshes keyed on the status snapshot, and a single in-flight mutation.

import { ApiClient, ApiError, offendersFromDetail } from "./api.js";
import { render } from "./render.js";
import { ConsoleStore } from "./state.js";
import type { Label } from "./types.js";

const POLL_MS = 2000;
const BACKOFF_MAX_MS = 30000;

const api = new ApiClient((url, init) => fetch(url, init));
const store = new ConsoleStore();
const root = document.getElementById("app")!;

let pollDelay = POLL_MS;
let submitting = false;
let dashboardKey = "";

const actions = {
  onLabel(processId: string, label: Label | null): void {
    store.setLabel(processId, label);
    paint();
  },
  onTogglePartial(allow: boolean): void {
    store.allowPartial = allow;
    paint();
  },
  onSubmit(): void {
    void submit();
  },
  onDismissNotice(): void {
    store.clearNotice();
    paint();
  },
};

function paint(): void {
  render(root, store, actions);
}

async function submit(): Promise<void> {
  if (submitting || !store.canSubmit() || store.queueIteration === null) {
    return;
  }
  submitting = true;
  try {
    await api.postLabels(store.queueIteration, store.selections());
    store.clearNotice();
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      // the loop moved on; refetch and keep labels for surviving ids
      store.noteStaleBatch();
    } else if (err instanceof ApiError && err.status === 422) {
      store.flagOffenders(offendersFromDetail(err.detail));
      store.notice = err.detail;
    } else {
      store.setOffline();
    }
  } finally {
    submitting = false;
  }
  await tick();
}

async function refreshDashboard(): Promise<void> {
  const s = store.status;
  if (s === null) {
    return;
  }
  const key = `${s.phase}:${s.iteration}:${s.labels_spent}`;
  if (key === dashboardKey) {
    return;
  }
  const metrics = await api.getMetrics();
  store.applyMetrics(metrics.records);
  if (metrics.records.length > 0) {
    const ranking = await api.getRanking(50);
    store.applyRanking(ranking.entries);
  }
  dashboardKey = key;
}

async function tick(): Promise<void> {
  try {
    const status = await api.getStatus();
    store.applyStatus(status);
    pollDelay = POLL_MS;
    if (store.needsQueue()) {
      try {
        store.loadQueue(await api.getQueries());
      } catch (err) {
        if (!(err instanceof ApiError && err.status === 409)) {
          throw err; // 409 = the batch moved again; next poll catches up
        }
      }
    }
    await refreshDashboard();
  } catch {
    store.setOffline();
    pollDelay = Math.min(pollDelay * 2, BACKOFF_MAX_MS);
  }
  paint();
}

async function loop(): Promise<void> {
  await tick();
  setTimeout(() => void loop(), pollDelay);
}

void loop();
