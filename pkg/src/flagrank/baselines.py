"""Reference detectors: attribute-value frequency and isolation forest.

Both work directly on the sparse Boolean datasets and emit the same
ScoredProcess lists as the main model, so every ranking/evaluation path is
shared.  Higher score always means "more anomalous".
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, ShapeError
from .ranking import ScoredProcess
from .util import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_TREES = 100
DEFAULT_SUBSAMPLE = 256


def avf_scores(dataset):
    """1 - mean attribute-value frequency of each row.

    A row scores high when its values (1s where 1 is rare, 0s where 0 is
    rare) are collectively infrequent.  Computed sparsely: for a row with
    active set A, AVF = (sum_{j not in A}(1-f_j) + sum_{j in A} f_j)/m.
    """
    if dataset.num_attrs < 1:
        raise PreconditionError("AVF needs at least one attribute")
    if dataset.num_rows == 0:
        raise PreconditionError("AVF needs at least one row")
    f = dataset.frequencies()
    m = dataset.num_attrs
    base = float((1.0 - f).sum())
    delta = 2.0 * f - 1.0
    out = []
    for pid, attrs in dataset.rows:
        avf = (base + delta[list(attrs)].sum()) / m if attrs else base / m
        out.append(ScoredProcess(pid, 1.0 - avf))
    return out


# ---------------------------------------------------------------------------
# isolation forest on Boolean presence splits


@dataclass
class IForestModel:
    trees: list
    psi: int
    num_trees: int
    seed: int
    num_attrs: int


def _harmonic(k):
    return float(np.sum(1.0 / np.arange(1, k + 1))) if k >= 1 else 0.0


def _avg_path_length(n):
    """Expected unsuccessful-search path length c(n) of a random tree."""
    if n <= 1:
        return 0.0
    return 2.0 * _harmonic(n - 1) - 2.0 * (n - 1) / n


def _build_tree(X, depth, limit, rng):
    n = X.shape[0]
    if n <= 1 or depth >= limit:
        return {"size": n}
    on = X.any(axis=0)
    allon = X.all(axis=0)
    candidates = np.where(on & ~allon)[0]
    if candidates.size == 0:
        return {"size": n}
    attr = int(candidates[rng.integers(candidates.size)])
    mask = X[:, attr]
    return {
        "attr": attr,
        "zero": _build_tree(X[~mask], depth + 1, limit, rng),
        "one": _build_tree(X[mask], depth + 1, limit, rng),
    }


def iforest_fit(dataset, num_trees=DEFAULT_TREES, psi=DEFAULT_SUBSAMPLE, seed=0):
    """Fit an isolation forest; splits partition on attribute presence."""
    if dataset.num_rows == 0:
        raise PreconditionError("cannot fit an isolation forest on zero rows")
    if psi < 2:
        raise PreconditionError("subsample size must be >= 2")
    if num_trees < 1:
        raise PreconditionError("need at least one tree")
    n = dataset.num_rows
    if psi > n:
        logger.warning(
            "subsample size %d exceeds dataset size %d; clamping", psi, n
        )
        psi = n
    limit = math.ceil(math.log2(psi))
    dense = dataset.to_dense().astype(bool)
    trees = []
    for i in range(num_trees):
        rng = np.random.default_rng(derive_seed(seed, f"tree/{i}"))
        pick = rng.choice(n, size=psi, replace=False)
        trees.append(_build_tree(dense[pick], 0, limit, rng))
    return IForestModel(
        trees=trees, psi=psi, num_trees=num_trees, seed=seed,
        num_attrs=dataset.num_attrs,
    )


def _tree_depths(tree, X, idx, depth, out):
    if "attr" not in tree:
        out[idx] = depth + _avg_path_length(tree["size"])
        return
    mask = X[idx, tree["attr"]]
    left = idx[~mask]
    right = idx[mask]
    if left.size:
        _tree_depths(tree["zero"], X, left, depth + 1, out)
    if right.size:
        _tree_depths(tree["one"], X, right, depth + 1, out)


def iforest_scores(model, dataset):
    """Path-length scores 2^(-E[h]/c(psi)); higher = easier to isolate."""
    if dataset.num_attrs != model.num_attrs:
        raise ShapeError(
            f"dataset has {dataset.num_attrs} attributes, forest was fit on "
            f"{model.num_attrs}"
        )
    if dataset.num_rows == 0:
        return []
    X = dataset.to_dense().astype(bool)
    n = X.shape[0]
    total = np.zeros(n)
    scratch = np.zeros(n)
    all_idx = np.arange(n)
    for tree in model.trees:
        _tree_depths(tree, X, all_idx, 0, scratch)
        total += scratch
    expected = total / model.num_trees
    denom = _avg_path_length(model.psi)
    scores = np.power(2.0, -expected / denom)
    return [
        ScoredProcess(pid, float(s))
        for (pid, _), s in zip(dataset.rows, scores)
    ]
