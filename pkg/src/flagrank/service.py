"""HTTP facade for interactive oracle runs.

One worker thread owns the active-learning loop; request handlers never
touch loop state directly.  The worker publishes an immutable Snapshot
after every phase transition, and label submissions accumulate in a
guarded map that the worker consumes once the pending batch is covered.
Reads are served from the latest snapshot, so concurrent clients are safe
by construction.
"""

import logging
import threading
from collections import Counter
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import alloop, schemas
from .errors import (
    ConflictError,
    DuplicateError,
    PreconditionError,
    StateError,
)

logger = logging.getLogger(__name__)

_JOIN_TIMEOUT = 10.0


@dataclass(frozen=True)
class Snapshot:
    """Immutable view of the loop published after each transition."""

    phase: str
    iteration: int  # pending iteration while awaiting, else last recorded
    labels_spent: int
    budget: int
    pending: object  # alloop.PendingBatch or None
    metrics: tuple
    ranked: object  # ranking.RankedList or None
    error: str = None


class SessionRunner:
    """Drives one ActiveLearningRun on a worker thread.

    The run may be freshly constructed or resumed from a checkpoint; a run
    whose metrics are non-empty is treated as already started.
    """

    def __init__(self, run):
        self._run = run
        self._cond = threading.Condition()
        self._accepted = {}
        self._stop = threading.Event()
        self._error = None
        self._thread = threading.Thread(
            target=self._work, name="flagrank-loop", daemon=True
        )
        self._attrs_by_pid = {pid: attrs for pid, attrs in run.dataset.rows}
        freqs = run.dataset.frequencies()
        # rarest-first is the most informative ordering for human triage
        self._attr_order = sorted(
            range(run.dataset.num_attrs), key=lambda j: (freqs[j], j)
        )
        names = run.dataset.attr_names
        self._attr_names = (
            list(names)
            if names is not None
            else [f"a{j}" for j in range(run.dataset.num_attrs)]
        )
        self._publish()

    # -- worker -----------------------------------------------------------

    def start(self):
        self._thread.start()

    def stop(self):
        self._stop.set()
        with self._cond:
            self._cond.notify_all()
        self._thread.join(timeout=_JOIN_TIMEOUT)

    def _work(self):
        run = self._run
        try:
            if not run.metrics:
                run.start()
            self._publish()
            while not self._stop.is_set():
                pending = run.propose_queries()
                self._publish()
                if pending is None:
                    return
                wanted = {c.process_id for c in pending.batch}
                with self._cond:
                    while not self._stop.is_set() and not wanted <= set(
                        self._accepted
                    ):
                        self._cond.wait(timeout=0.5)
                    if self._stop.is_set():
                        return
                    labels = [
                        (c.process_id, self._accepted[c.process_id])
                        for c in pending.batch
                    ]
                # flip the published phase before the slow retrain so
                # clients stop seeing the consumed batch as pending
                self._publish(phase=alloop.PHASE_TRAINING, pending=None)
                run.complete_iteration(labels)
                with self._cond:
                    self._accepted = {}
                self._publish()
        except Exception as err:  # surface the failure via /api/status
            logger.exception("active-learning loop failed")
            self._error = f"{type(err).__name__}: {err}"
            self._run.phase = alloop.PHASE_DONE
            self._publish()

    _UNSET = object()

    def _publish(self, phase=None, pending=_UNSET):
        run = self._run
        pend = run.pending if pending is self._UNSET else pending
        if pend is not None:
            iteration = pend.iteration
        elif run.metrics:
            iteration = run.metrics[-1].iteration
        else:
            iteration = 0
        snap = Snapshot(
            phase=run.phase if phase is None else phase,
            iteration=iteration,
            labels_spent=run.labels_spent,
            budget=run.config.budget,
            pending=pend,
            metrics=tuple(run.metrics),
            ranked=run.last_ranked,
            error=self._error,
        )
        with self._cond:
            self._snapshot = snap

    # -- handler-facing reads/writes ---------------------------------------

    def snapshot(self):
        with self._cond:
            return self._snapshot

    def top_attributes(self, process_id, limit=10):
        active = set(self._attrs_by_pid[process_id])
        picked = [j for j in self._attr_order if j in active]
        return [self._attr_names[j] for j in picked[:limit]]

    def submit_labels(self, iteration, items):
        """Merge labels for the pending batch; returns (accepted, outstanding).

        Identical resubmissions are idempotent (accepted=0); a different
        label for an already-accepted id is a conflict.
        """
        with self._cond:
            snap = self._snapshot
            pending = snap.pending
            if pending is None:
                raise StateError(
                    f"no pending query batch to label (phase {snap.phase!r})"
                )
            if iteration != pending.iteration:
                raise ConflictError(
                    f"stale iteration {iteration}; current is "
                    f"{pending.iteration}"
                )
            ids = [it.process_id for it in items]
            dupes = sorted(pid for pid, n in Counter(ids).items() if n > 1)
            if dupes:
                raise DuplicateError(
                    f"duplicate process ids in payload: {dupes}"
                )
            wanted = {c.process_id for c in pending.batch}
            unknown = sorted(set(ids) - wanted)
            if unknown:
                raise PreconditionError(
                    f"ids not in the pending batch: {unknown}"
                )
            conflicts = sorted(
                it.process_id
                for it in items
                if self._accepted.get(it.process_id, it.label) != it.label
            )
            if conflicts:
                raise ConflictError(
                    f"conflicting relabel for already-accepted ids: "
                    f"{conflicts}"
                )
            accepted = 0
            for it in items:
                if it.process_id not in self._accepted:
                    self._accepted[it.process_id] = it.label
                    accepted += 1
            outstanding = len(wanted - set(self._accepted))
            if outstanding == 0:
                self._cond.notify_all()
            return accepted, outstanding


def create_app(runner, frontend_dir=None):
    """FastAPI application over a SessionRunner (not yet started)."""

    @asynccontextmanager
    async def lifespan(app):
        runner.start()
        try:
            yield
        finally:
            runner.stop()

    app = FastAPI(title="flagrank oracle service", lifespan=lifespan)

    def _error_response(status, exc):
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(StateError)
    async def _state(request, exc):
        return _error_response(409, exc)

    @app.exception_handler(ConflictError)
    async def _conflict(request, exc):
        return _error_response(409, exc)

    @app.exception_handler(DuplicateError)
    async def _duplicate(request, exc):
        return _error_response(422, exc)

    @app.exception_handler(PreconditionError)
    async def _precondition(request, exc):
        return _error_response(422, exc)

    @app.get("/api/status", response_model=schemas.StatusResponse)
    def status():
        snap = runner.snapshot()
        return schemas.StatusResponse(
            phase=snap.phase,
            iteration=snap.iteration,
            labels_spent=snap.labels_spent,
            budget=snap.budget,
            budget_left=snap.budget - snap.labels_spent,
            pending_count=len(snap.pending.batch) if snap.pending else 0,
            error=snap.error,
        )

    @app.get("/api/queries", response_model=schemas.QueriesResponse)
    def queries():
        snap = runner.snapshot()
        if snap.pending is None:
            raise StateError(
                f"no pending query batch (phase {snap.phase!r})"
            )
        ordered = sorted(
            snap.pending.batch, key=lambda c: (-c.uncertainty, c.process_id)
        )
        return schemas.QueriesResponse(
            iteration=snap.pending.iteration,
            threshold=snap.pending.threshold,
            items=[
                schemas.QueryItem(
                    process_id=c.process_id,
                    score=c.error,
                    rank=c.rank,
                    uncertainty=c.uncertainty,
                    top_attributes=runner.top_attributes(c.process_id),
                )
                for c in ordered
            ],
        )

    @app.post("/api/labels", response_model=schemas.LabelsResponse)
    def labels(payload: schemas.LabelsRequest):
        accepted, outstanding = runner.submit_labels(
            payload.iteration, payload.labels
        )
        return schemas.LabelsResponse(accepted=accepted, outstanding=outstanding)

    @app.get("/api/ranking", response_model=schemas.RankingResponse)
    def ranking(limit: int = None):
        if limit is not None and limit <= 0:
            raise PreconditionError("limit must be a positive integer")
        snap = runner.snapshot()
        if snap.ranked is None:
            raise StateError("no ranking yet; iteration 0 has not completed")
        entries = snap.ranked.entries if limit is None else snap.ranked.entries[:limit]
        return schemas.RankingResponse(
            iteration=snap.iteration,
            entries=[
                schemas.RankingEntry(rank=r, process_id=pid, score=score)
                for r, pid, score in entries
            ],
        )

    @app.get("/api/metrics", response_model=schemas.MetricsResponse)
    def metrics():
        snap = runner.snapshot()
        return schemas.MetricsResponse(
            records=alloop.metrics_objects(list(snap.metrics))
        )

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount(
            "/", StaticFiles(directory=str(frontend_dir), html=True),
            name="console",
        )

    return app
