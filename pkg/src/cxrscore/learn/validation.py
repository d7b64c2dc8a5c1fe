"""Leave-two-out cross-validation and confusion matrices."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from itertools import combinations
from math import comb

import numpy as np

from ..errors import InvalidInputError
from .logistic import train_severity_model
from .tree import fit_tree


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["accuracy"] = self.accuracy
        return d


def confusion(yhat, y) -> ConfusionMatrix:
    yhat = np.asarray(yhat).ravel().astype(int)
    y = np.asarray(y).ravel().astype(int)
    if yhat.size != y.size:
        raise InvalidInputError(f"length mismatch: {yhat.size} predictions for {y.size} labels")
    return ConfusionMatrix(
        tp=int(np.sum((yhat == 1) & (y == 1))),
        fp=int(np.sum((yhat == 1) & (y == 0))),
        fn=int(np.sum((yhat == 0) & (y == 1))),
        tn=int(np.sum((yhat == 0) & (y == 0))),
    )


class TreeFitter:
    def __init__(self, max_depth=3, min_leaf=10):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def __call__(self, X, y):
        return fit_tree(X, y, self.max_depth, self.min_leaf)


class LogisticFitter:
    def __init__(self, ridge=1.0, threshold=0.5):
        self.ridge = ridge
        self.threshold = threshold

    def __call__(self, X, y):
        model = train_severity_model(X, y, [f"f{i}" for i in range(np.shape(X)[1])], self.ridge)
        return _Thresholded(model, self.threshold)


class _Thresholded:
    def __init__(self, model, threshold):
        self.model = model
        self.threshold = threshold

    def predict(self, X):
        return self.model.predict(X, self.threshold)


@dataclass(frozen=True)
class CVResult:
    accuracy: float
    n_folds: int
    n_executed: int
    n_skipped: int
    n_correct: int

    def to_dict(self) -> dict:
        return asdict(self)


def _run_folds(X, y, fitter, folds):
    correct = executed = skipped = 0
    n = y.size
    for i, j in folds:
        keep = np.ones(n, dtype=bool)
        keep[[i, j]] = False
        try:
            model = fitter(X[keep], y[keep])
        except InvalidInputError:
            skipped += 1
            continue
        executed += 1
        correct += int(np.sum(model.predict(X[[i, j]]) == y[[i, j]]))
    return correct, executed, skipped


def leave_two_out_cv(X, y, fitter, jobs: int = 1, min_samples: int = 22) -> CVResult:
    """Exhaustive leave-two-out cross-validation over all unordered pairs.

    ``fitter(X, y)`` must return an object with ``predict``. Folds whose
    training set violates the fitter's preconditions (it raises
    ``InvalidInputError``) are skipped and counted; accuracy is taken over
    the executed folds.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel().astype(int)
    n = y.size
    if X.ndim != 2 or X.shape[0] != n:
        raise InvalidInputError(f"X has shape {X.shape} but y has {n} labels")
    if n < min_samples:
        raise InvalidInputError(f"leave-two-out needs at least {min_samples} samples, got {n}")

    folds = list(combinations(range(n), 2))
    if jobs > 1:
        chunks = [folds[k::jobs] for k in range(jobs)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda c: _run_folds(X, y, fitter, c), chunks))
    else:
        parts = [_run_folds(X, y, fitter, folds)]
    correct = sum(p[0] for p in parts)
    executed = sum(p[1] for p in parts)
    skipped = sum(p[2] for p in parts)
    accuracy = correct / (2 * executed) if executed else float("nan")
    return CVResult(accuracy, comb(n, 2), executed, skipped, correct)
