"""Active-learning orchestration: uncertainty, queries, oracles, pool
bookkeeping, augmentation, retraining, and per-iteration metrics.

The loop always records an iteration-0 baseline (model trained only on the
initial labeled normals, before any oracle feedback).  Each later iteration
scores the unlabeled rows, calibrates the threshold, queries the oracle for
a hybrid uncertainty/outlier batch, augments the newly labeled normals with
GAN samples, retrains, and re-ranks the full dataset.  The loop stops at
the iteration cap, on budget exhaustion, or when no candidates remain.

``ActiveLearningRun`` exposes the loop as park/resume steps
(propose_queries / complete_iteration) so an HTTP service can suspend at
``awaiting_labels`` indefinitely; ``run_loop`` drives it to completion
against an in-process oracle.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import adaen, ganaug
from .dataio import BooleanDataset
from .errors import (
    ConflictError,
    DuplicateError,
    FlagrankError,
    MissingLabelError,
    PreconditionError,
    StateError,
    UndefinedMetricError,
)
from .numkernel import sigmoid_array
from .ranking import ScoredProcess, ndcg, rank
from .util import ceil_frac, derive_seed

logger = logging.getLogger(__name__)

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"

PHASE_TRAINING = "training"
PHASE_AWAITING = "awaiting_labels"
PHASE_DONE = "done"

_CKPT_FORMAT = "alrun-checkpoint-v1"


@dataclass
class RunConfig:
    budget: int
    iterations: int = 40
    k: int = 20
    query_mix: float = 0.5
    initial_labeled_fraction: float = 0.05
    percentile: float = 0.8
    synth_ratio: float = 1.0
    warm_start: bool = True
    holdout_fraction: float = 0.0
    plateau_stop: bool = False
    plateau_window: int = 5
    plateau_delta: float = 0.005
    seed: int = 0
    # model knobs (input_dim comes from the dataset)
    hidden: int = None
    latent: int = None
    alpha: float = 0.5
    lam: float = 0.1
    lr: float = 1e-3
    batch: int = 64
    epochs_per_iteration: int = 20
    # augmentation knobs
    gan_epochs: int = 30
    gan_lr: float = 1e-3
    gan_noise_dim: int = 32
    gan_hidden: int = None

    def __post_init__(self):
        if self.iterations < 1:
            raise PreconditionError("iterations must be >= 1")
        if self.budget < 0:
            raise PreconditionError("budget must be >= 0")
        if self.k < 1:
            raise PreconditionError("k must be >= 1")
        if not 0.0 <= self.query_mix <= 1.0:
            raise PreconditionError("query_mix must lie in [0, 1]")
        if not 0.0 < self.percentile < 1.0:
            raise PreconditionError("percentile must lie strictly in (0, 1)")
        if not 0.0 <= self.initial_labeled_fraction <= 1.0:
            raise PreconditionError("initial_labeled_fraction must lie in [0, 1]")
        if self.synth_ratio < 0.0:
            raise PreconditionError("synth_ratio must be >= 0")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise PreconditionError("holdout_fraction must lie in [0, 1)")

    def adaen_config(self, input_dim):
        return adaen.AdaenConfig(
            input_dim=input_dim,
            hidden=self.hidden,
            latent=self.latent,
            alpha=self.alpha,
            lam=self.lam,
            lr=self.lr,
            batch=self.batch,
            epochs_per_iteration=self.epochs_per_iteration,
            seed=derive_seed(self.seed, "adaen"),
        )


@dataclass(frozen=True, eq=False)
class LabeledPool:
    normal_ids: frozenset
    anomalous_ids: frozenset
    synthetic_rows: np.ndarray
    synthetic_ids: tuple

    def __post_init__(self):
        overlap = self.normal_ids & self.anomalous_ids
        if overlap:
            raise ConflictError(
                f"ids labeled both normal and anomalous: {sorted(overlap)[:5]}"
            )
        if len(self.synthetic_ids) != self.synthetic_rows.shape[0]:
            raise PreconditionError("synthetic ids/rows length mismatch")


def empty_pool(num_attrs):
    return LabeledPool(
        normal_ids=frozenset(),
        anomalous_ids=frozenset(),
        synthetic_rows=np.zeros((0, num_attrs)),
        synthetic_ids=(),
    )


def update_pool(pool, labels, gan_synth=None):
    """Extend the pool with fresh oracle labels and optional synthetic rows."""
    seen = set()
    normals = set()
    anomalies = set()
    for pid, lab in labels:
        if pid in seen:
            raise ConflictError(f"process {pid!r} appears twice in one label set")
        seen.add(pid)
        if pid in pool.normal_ids or pid in pool.anomalous_ids:
            raise ConflictError(f"process {pid!r} is already labeled")
        if lab == LABEL_NORMAL:
            normals.add(pid)
        elif lab == LABEL_ANOMALOUS:
            anomalies.add(pid)
        else:
            raise PreconditionError(f"unknown label {lab!r} for process {pid!r}")
    synth_rows = pool.synthetic_rows
    synth_ids = pool.synthetic_ids
    if gan_synth is not None:
        new_rows, new_ids = gan_synth
        clash = set(new_ids) & (
            set(synth_ids) | pool.normal_ids | pool.anomalous_ids | seen
        )
        if clash:
            raise DuplicateError(f"synthetic id collision: {sorted(clash)[:5]}")
        if new_rows.shape[0] != len(new_ids):
            raise PreconditionError("synthetic ids/rows length mismatch")
        if new_rows.shape[0]:
            synth_rows = np.vstack([synth_rows, new_rows])
            synth_ids = synth_ids + tuple(new_ids)
    return LabeledPool(
        normal_ids=pool.normal_ids | normals,
        anomalous_ids=pool.anomalous_ids | anomalies,
        synthetic_rows=synth_rows,
        synthetic_ids=synth_ids,
    )


def estimate_uncertainty(errors, tau):
    """U(x) = 1 - sigmoid(|e - tau| / MAD): maximal exactly at the threshold.

    The margin is scaled by the median absolute deviation of the error set
    (floored at 1e-12) so the mapping is insensitive to the overall error
    scale.  Values lie in (0, 0.5].
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise PreconditionError("cannot estimate uncertainty of zero errors")
    med = np.median(errors)
    mad = np.median(np.abs(errors - med))
    s = max(float(mad), 1e-12)
    # 1 - sigmoid(z) computed as sigmoid(-z); the cap keeps the result
    # strictly positive even when the margin dwarfs the scale
    z = np.minimum(np.abs(errors - tau) / s, 700.0)
    return sigmoid_array(-z)


class QueryCandidate(NamedTuple):
    process_id: str
    error: float
    uncertainty: float
    rank: int  # 1-based position among current candidates by error


def select_queries(candidates, k, query_mix, budget_left):
    """Hybrid batch: ceil(k*mix) most-uncertain + highest-error remainder.

    The effective batch size is min(k, budget_left, candidates); overlap
    between the two orderings is de-duplicated and backfilled from the
    uncertainty ordering.  All ties break by ascending process_id.
    """
    k_eff = min(k, budget_left, len(candidates))
    if k_eff <= 0:
        return []
    by_u = sorted(candidates, key=lambda c: (-c.uncertainty, c.process_id))
    by_e = sorted(candidates, key=lambda c: (-c.error, c.process_id))
    n_unc = ceil_frac(query_mix, k_eff)
    chosen = list(by_u[:n_unc])
    taken = {c.process_id for c in chosen}
    # The outlier share is a positional slice of the error ordering; any of
    # its ids already claimed by the uncertainty share are dropped and the
    # shortfall backfills from the uncertainty ordering.
    for cand in by_e[: k_eff - n_unc]:
        if cand.process_id not in taken:
            chosen.append(cand)
            taken.add(cand.process_id)
    for cand in by_u[n_unc:]:
        if len(chosen) >= k_eff:
            break
        if cand.process_id not in taken:
            chosen.append(cand)
            taken.add(cand.process_id)
    return chosen


class SimulatedOracle:
    """Ground-truth lookup with optional seeded label-flip noise."""

    def __init__(self, truth, noise=0.0, seed=0):
        if not 0.0 <= noise <= 1.0:
            raise PreconditionError("noise must lie in [0, 1]")
        self._attacks = truth.attack_ids
        self._noise = noise
        self._rng = np.random.default_rng(derive_seed(seed, "oracle"))

    def label(self, process_id):
        lab = LABEL_ANOMALOUS if process_id in self._attacks else LABEL_NORMAL
        if self._noise > 0.0 and self._rng.random() < self._noise:
            lab = LABEL_NORMAL if lab == LABEL_ANOMALOUS else LABEL_ANOMALOUS
        return lab


class ScriptedOracle:
    """Replays labels from a fixed mapping; unknown ids are an error."""

    def __init__(self, mapping):
        self._map = dict(mapping)
        for pid, lab in self._map.items():
            if lab not in (LABEL_NORMAL, LABEL_ANOMALOUS):
                raise PreconditionError(
                    f"script labels {pid!r} as {lab!r}; expected "
                    f"{LABEL_NORMAL!r} or {LABEL_ANOMALOUS!r}"
                )

    def label(self, process_id):
        if process_id not in self._map:
            raise MissingLabelError(
                f"label script has no entry for process {process_id!r}"
            )
        return self._map[process_id]


def resolve_labels(batch, oracle):
    """One oracle label per batch entry, in batch order."""
    return [(cand.process_id, oracle.label(cand.process_id)) for cand in batch]


@dataclass
class IterationRecord:
    iteration: int
    ndcg: float  # None when no ground truth is available
    threshold: float
    labels_spent: int
    pool_normal: int
    pool_anomalous: int
    pool_synthetic: int
    mean_loss: float  # None when the iteration ran zero epochs
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class PendingBatch:
    iteration: int
    threshold: float
    batch: list  # of QueryCandidate


def smooth_series(values, window=5):
    """Centered moving average; the window truncates at both ends."""
    half = window // 2
    out = []
    for i in range(len(values)):
        lo = max(0, i - half)
        hi = min(len(values), i + half + 1)
        out.append(sum(values[lo:hi]) / (hi - lo))
    return out


def metrics_objects(records):
    """Records as plain dicts: ndcg omitted when unavailable and a smoothed
    companion series included when every record has an ndcg."""
    have_all_ndcg = all(r.ndcg is not None for r in records) and records
    smoothed = (
        smooth_series([r.ndcg for r in records]) if have_all_ndcg else None
    )
    out = []
    for i, rec in enumerate(records):
        obj = {"iteration": rec.iteration}
        if rec.ndcg is not None:
            obj["ndcg"] = rec.ndcg
        if smoothed is not None:
            obj["ndcg_smoothed"] = smoothed[i]
        obj["threshold"] = rec.threshold
        obj["labels_spent"] = rec.labels_spent
        obj["pool_normal"] = rec.pool_normal
        obj["pool_anomalous"] = rec.pool_anomalous
        obj["pool_synthetic"] = rec.pool_synthetic
        obj["mean_loss"] = rec.mean_loss
        out.append(obj)
    return out


def write_metrics_jsonl(records, fileobj):
    """One JSON object per iteration (see metrics_objects)."""
    for obj in metrics_objects(records):
        fileobj.write(json.dumps(obj) + "\n")


class ActiveLearningRun:
    """A single loop over one dataset; parkable between query and labels.

    Construction does no work: call start() (trains the baseline), then
    alternate propose_queries() / complete_iteration(labels) until
    propose_queries() returns None (phase done).
    """

    def __init__(self, dataset, config, truth=None, initial_normal_ids=None):
        if dataset.num_rows == 0:
            raise PreconditionError("cannot run on an empty dataset")
        if truth is None and initial_normal_ids is None:
            raise PreconditionError(
                "need ground truth or explicit initial normal ids for the "
                "starting pool"
            )
        self.dataset = dataset
        self.config = config
        self.truth = truth
        self._initial_normal_ids = initial_normal_ids
        self._index = {pid: i for i, (pid, _) in enumerate(dataset.rows)}
        self.model = None
        self.pool = None
        self.metrics = []
        self.pending = None
        self.labels_spent = 0
        self.phase = PHASE_TRAINING
        self.holdout_ids = frozenset()
        self.last_ranked = None
        self.checkpoint_path = None
        self._ndcg_warned = False

    # -- helpers ----------------------------------------------------------

    def _rows_matrix(self, ids):
        """Dense matrix of the given real rows, in dataset order."""
        wanted = set(ids)
        picked = [
            (pid, attrs) for pid, attrs in self.dataset.rows if pid in wanted
        ]
        X = np.zeros((len(picked), self.dataset.num_attrs))
        for i, (_, attrs) in enumerate(picked):
            if attrs:
                X[i, list(attrs)] = 1.0
        return X

    def _unlabeled_ids(self):
        labeled = self.pool.normal_ids | self.pool.anomalous_ids
        return [
            pid
            for pid, _ in self.dataset.rows
            if pid not in labeled and pid not in self.holdout_ids
        ]

    def _score_subset(self, ids):
        wanted = set(ids)
        rows = tuple(
            (pid, attrs) for pid, attrs in self.dataset.rows if pid in wanted
        )
        subset = BooleanDataset(num_attrs=self.dataset.num_attrs, rows=rows)
        return adaen.anomaly_scores(self.model, subset)

    def _train_matrix(self):
        X = self._rows_matrix(self.pool.normal_ids)
        if self.pool.synthetic_rows.shape[0]:
            X = np.vstack([X, self.pool.synthetic_rows])
        return X

    def _evaluate_ndcg(self):
        if self.truth is None:
            return None
        scored = adaen.anomaly_scores(self.model, self.dataset)
        self.last_ranked = rank(scored)
        target = scored
        if self.holdout_ids:
            target = [sp for sp in scored if sp.process_id in self.holdout_ids]
        try:
            return ndcg(rank(target), self.truth)
        except UndefinedMetricError:
            if not self._ndcg_warned:
                logger.warning(
                    "nDCG undefined (no attacks in the evaluation split); "
                    "recording null"
                )
                self._ndcg_warned = True
            return None

    def _rank_only(self):
        scored = adaen.anomaly_scores(self.model, self.dataset)
        self.last_ranked = rank(scored)

    def _unlabeled_threshold(self):
        ids = self._unlabeled_ids()
        if not ids:
            return None
        errors = [sp.error for sp in self._score_subset(ids)]
        return adaen.calibrate_threshold(errors, self.config.percentile)

    def _record(self, iteration, tau, trace, t0):
        if self.truth is not None:
            nd = self._evaluate_ndcg()
        else:
            nd = None
            self._rank_only()
        mean_loss = trace[-1].total if trace else None
        rec = IterationRecord(
            iteration=iteration,
            ndcg=nd,
            threshold=tau,
            labels_spent=self.labels_spent,
            pool_normal=len(self.pool.normal_ids),
            pool_anomalous=len(self.pool.anomalous_ids),
            pool_synthetic=len(self.pool.synthetic_ids),
            mean_loss=mean_loss,
            wall_time=time.monotonic() - t0,
        )
        self.metrics.append(rec)
        return rec

    # -- lifecycle --------------------------------------------------------

    def start(self):
        """Build the initial pool, train the baseline, record iteration 0."""
        if self.metrics or self.model is not None:
            raise StateError("run already started")
        t0 = time.monotonic()
        cfg = self.config
        all_ids = self.dataset.ids()
        if cfg.holdout_fraction > 0.0:
            rng = np.random.default_rng(derive_seed(cfg.seed, "holdout"))
            count = ceil_frac(cfg.holdout_fraction, len(all_ids))
            pick = rng.choice(len(all_ids), size=count, replace=False)
            self.holdout_ids = frozenset(all_ids[i] for i in pick)
        if self._initial_normal_ids is not None:
            init = list(dict.fromkeys(self._initial_normal_ids))
            unknown = [pid for pid in init if pid not in self._index]
            if unknown:
                raise PreconditionError(
                    f"seed-label ids not in dataset: {unknown[:5]}"
                )
            init = [pid for pid in init if pid not in self.holdout_ids]
            if not init:
                raise PreconditionError("no usable seed-label ids")
        else:
            normals = [
                pid
                for pid in all_ids
                if pid not in self.truth.attack_ids
                and pid not in self.holdout_ids
            ]
            if not normals:
                raise PreconditionError("dataset has no normal rows to seed from")
            count = max(1, ceil_frac(cfg.initial_labeled_fraction, len(normals)))
            rng = np.random.default_rng(derive_seed(cfg.seed, "init-pool"))
            pick = rng.choice(len(normals), size=min(count, len(normals)),
                              replace=False)
            init = [normals[i] for i in sorted(pick)]
        self.pool = update_pool(
            empty_pool(self.dataset.num_attrs),
            [(pid, LABEL_NORMAL) for pid in init],
        )
        self.model = adaen.build(cfg.adaen_config(self.dataset.num_attrs))
        trace = adaen.train(
            self.model,
            self._train_matrix(),
            epochs=cfg.epochs_per_iteration,
            seed=derive_seed(cfg.seed, "train/0"),
        )
        tau = self._unlabeled_threshold()
        self._record(0, tau, trace, t0)
        self.phase = PHASE_TRAINING
        self._maybe_checkpoint()
        return self.metrics[0]

    def _plateaued(self):
        cfg = self.config
        if not cfg.plateau_stop:
            return False
        series = [r.ndcg for r in self.metrics if r.ndcg is not None]
        if len(series) < cfg.plateau_window:
            return False
        tail = series[-cfg.plateau_window:]
        return max(tail) - min(tail) < cfg.plateau_delta

    def propose_queries(self):
        """Select (or re-serve) the next oracle batch; None when finished."""
        if self.model is None:
            raise StateError("run not started")
        if self.phase == PHASE_DONE:
            return None
        if self.pending is not None:
            self.phase = PHASE_AWAITING
            return self.pending
        next_iteration = len(self.metrics)
        budget_left = self.config.budget - self.labels_spent
        if (
            next_iteration > self.config.iterations
            or budget_left <= 0
            or self._plateaued()
        ):
            self.phase = PHASE_DONE
            return None
        ids = self._unlabeled_ids()
        if not ids:
            self.phase = PHASE_DONE
            return None
        scored = self._score_subset(ids)
        errors = np.array([sp.error for sp in scored])
        tau = adaen.calibrate_threshold(errors, self.config.percentile)
        unc = estimate_uncertainty(errors, tau)
        order = sorted(
            range(len(scored)), key=lambda i: (-scored[i].error, scored[i].process_id)
        )
        rank_of = {scored[i].process_id: r + 1 for r, i in enumerate(order)}
        candidates = [
            QueryCandidate(
                process_id=sp.process_id,
                error=float(sp.error),
                uncertainty=float(u),
                rank=rank_of[sp.process_id],
            )
            for sp, u in zip(scored, unc)
        ]
        batch = select_queries(
            candidates, self.config.k, self.config.query_mix, budget_left
        )
        if not batch:
            self.phase = PHASE_DONE
            return None
        self.pending = PendingBatch(
            iteration=next_iteration, threshold=float(tau), batch=batch
        )
        self.phase = PHASE_AWAITING
        self._maybe_checkpoint()
        return self.pending

    def complete_iteration(self, labels):
        """Consume labels covering the pending batch; augment, retrain, log."""
        if self.pending is None:
            raise StateError("no pending query batch to complete")
        t0 = time.monotonic()
        cfg = self.config
        t = self.pending.iteration
        pending_ids = {c.process_id for c in self.pending.batch}
        label_ids = [pid for pid, _ in labels]
        if len(set(label_ids)) != len(label_ids):
            raise ConflictError("duplicate process_id in submitted labels")
        if set(label_ids) != pending_ids:
            missing = sorted(pending_ids - set(label_ids))[:5]
            extra = sorted(set(label_ids) - pending_ids)[:5]
            raise PreconditionError(
                f"labels must cover the pending batch exactly "
                f"(missing {missing}, unexpected {extra})"
            )
        self.labels_spent += len(labels)
        new_normals = [pid for pid, lab in labels if lab == LABEL_NORMAL]
        cumulative_normals = self.pool.normal_ids | set(new_normals)
        n_synth = ceil_frac(cfg.synth_ratio, len(new_normals))
        gan_synth = None
        if n_synth > 0:
            if len(cumulative_normals) >= 2:
                gan = ganaug.train_gan(
                    self._rows_matrix(cumulative_normals),
                    epochs=cfg.gan_epochs,
                    lr=cfg.gan_lr,
                    seed=derive_seed(cfg.seed, f"gan/{t}"),
                    noise_dim=cfg.gan_noise_dim,
                    hidden=cfg.gan_hidden,
                )
                rows = ganaug.generate(
                    gan, n_synth, seed=derive_seed(cfg.seed, f"gan-sample/{t}")
                )
                ids = tuple(f"synth:{t}:{i}" for i in range(n_synth))
                gan_synth = (rows, ids)
            else:
                logger.warning(
                    "iteration %d: fewer than 2 labeled normals; skipping "
                    "GAN augmentation",
                    t,
                )
        self.pool = update_pool(self.pool, labels, gan_synth)
        if not cfg.warm_start:
            self.model = adaen.build(cfg.adaen_config(self.dataset.num_attrs))
        try:
            trace = adaen.train(
                self.model,
                self._train_matrix(),
                epochs=cfg.epochs_per_iteration,
                seed=derive_seed(cfg.seed, f"train/{t}"),
            )
        except FlagrankError as err:
            raise type(err)(f"iteration {t}: {err}") from err
        rec = self._record(t, self.pending.threshold, trace, t0)
        self.pending = None
        self.phase = PHASE_TRAINING
        budget_left = cfg.budget - self.labels_spent
        if t >= cfg.iterations or budget_left <= 0:
            self.phase = PHASE_DONE
        self._maybe_checkpoint()
        return rec

    # -- persistence ------------------------------------------------------

    def _maybe_checkpoint(self):
        if self.checkpoint_path:
            with open(self.checkpoint_path, "w", encoding="utf-8") as fh:
                self.save_checkpoint(fh)

    def save_checkpoint(self, fileobj):
        payload = {
            "format": _CKPT_FORMAT,
            "config": asdict(self.config),
            "dataset": {
                "num_rows": self.dataset.num_rows,
                "num_attrs": self.dataset.num_attrs,
            },
            "phase": self.phase,
            "labels_spent": self.labels_spent,
            "holdout_ids": sorted(self.holdout_ids),
            "pool": {
                "normal_ids": sorted(self.pool.normal_ids),
                "anomalous_ids": sorted(self.pool.anomalous_ids),
                "synthetic_ids": list(self.pool.synthetic_ids),
                "synthetic_rows": self.pool.synthetic_rows.tolist(),
            },
            "pending": None
            if self.pending is None
            else {
                "iteration": self.pending.iteration,
                "threshold": self.pending.threshold,
                "batch": [list(c) for c in self.pending.batch],
            },
            "metrics": [asdict(r) for r in self.metrics],
            "model": adaen.model_to_payload(self.model),
        }
        json.dump(payload, fileobj)

    @classmethod
    def resume(cls, fileobj, dataset, truth=None):
        payload = json.load(fileobj)
        if payload.get("format") != _CKPT_FORMAT:
            raise PreconditionError(
                f"unrecognized checkpoint format: {payload.get('format')!r}"
            )
        ds_info = payload["dataset"]
        if (
            ds_info["num_rows"] != dataset.num_rows
            or ds_info["num_attrs"] != dataset.num_attrs
        ):
            raise PreconditionError(
                "checkpoint was taken against a different dataset "
                f"({ds_info['num_rows']}x{ds_info['num_attrs']} vs "
                f"{dataset.num_rows}x{dataset.num_attrs})"
            )
        config = RunConfig(**payload["config"])
        run = cls(
            dataset,
            config,
            truth=truth,
            initial_normal_ids=payload["pool"]["normal_ids"],
        )
        run.model = adaen.model_from_payload(payload["model"])
        run.holdout_ids = frozenset(payload["holdout_ids"])
        pool = payload["pool"]
        run.pool = LabeledPool(
            normal_ids=frozenset(pool["normal_ids"]),
            anomalous_ids=frozenset(pool["anomalous_ids"]),
            synthetic_rows=np.asarray(pool["synthetic_rows"]).reshape(
                len(pool["synthetic_ids"]), dataset.num_attrs
            ),
            synthetic_ids=tuple(pool["synthetic_ids"]),
        )
        run.labels_spent = payload["labels_spent"]
        run.phase = payload["phase"]
        run.metrics = [IterationRecord(**r) for r in payload["metrics"]]
        if payload["pending"] is not None:
            run.pending = PendingBatch(
                iteration=payload["pending"]["iteration"],
                threshold=payload["pending"]["threshold"],
                batch=[QueryCandidate(*c) for c in payload["pending"]["batch"]],
            )
        run._rank_only()
        return run


def run_loop(dataset, oracle, config, truth=None, initial_normal_ids=None):
    """Drive a full run against an in-process oracle.

    Returns (final RankedList, metrics records, trained model).
    """
    run = ActiveLearningRun(
        dataset, config, truth=truth, initial_normal_ids=initial_normal_ids
    )
    run.start()
    while True:
        pending = run.propose_queries()
        if pending is None:
            break
        labels = resolve_labels(pending.batch, oracle)
        run.complete_iteration(labels)
    return run.last_ranked, run.metrics, run.model
