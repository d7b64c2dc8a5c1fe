"""Standardization and the ridge-penalized logistic severity model."""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import InvalidInputError, SchemaError

STD_FLOOR = 1e-12
_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


def canonical_order(X, y=None):
    """Row permutation that sorts samples lexicographically (label last).

    Fitting on canonically ordered data makes every floating point sum
    independent of the order in which samples were supplied.
    """
    X = np.asarray(X, dtype=np.float64)
    keys = [X[:, j] for j in range(X.shape[1])]
    if y is not None:
        keys.append(np.asarray(y, dtype=np.float64))
    if not keys:
        return np.arange(X.shape[0])
    return np.lexsort(keys[::-1])


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean


def fit_standardizer(X) -> Standardizer:
    """Per-feature mean and population standard deviation (floored at 1e-12)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidInputError("standardization needs a 2-D matrix with at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("feature matrix contains non-finite values")
    X = X[canonical_order(X)]
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


def sigmoid(z):
    """Logistic function kept strictly inside (0, 1)."""
    return np.clip(expit(z), _P_LO, _P_HI)


def _design(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def penalized_loglik(theta, X, y, ridge=1.0) -> float:
    """Log-likelihood minus ``ridge/2 * |w|^2``; ``theta = [w..., bias]``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = _design(X) @ theta
    # log p = -log(1 + e^-z), log(1 - p) = -log(1 + e^z)
    ll = -(y * np.logaddexp(0.0, -z) + (1 - y) * np.logaddexp(0.0, z)).sum()
    w = theta[:-1]
    return float(ll - 0.5 * ridge * w @ w)


def penalized_gradient(theta, X, y, ridge=1.0) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A = _design(X)
    g = A.T @ (y - expit(A @ theta))
    g[:-1] -= ridge * theta[:-1]
    return g


@dataclass(frozen=True)
class LogisticFit:
    weights: np.ndarray
    bias: float
    iterations: int
    grad_norm: float
    converged: bool


def fit_logistic(X, y, ridge: float = 1.0, tol: float = 1e-8, max_iter: int = 1000) -> LogisticFit:
    """Maximize the L2-penalized log-likelihood by iteratively reweighted least squares.

    The bias is not penalized. Iteration stops once the max-norm of the
    gradient falls below ``tol``; hitting ``max_iter`` first issues a
    ``RuntimeWarning`` and still returns the last iterate.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InvalidInputError(f"X has shape {X.shape} but y has {y.size} labels")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite values in training data")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise InvalidInputError("both classes must be present to fit a logistic model")
    if ridge < 0:
        raise InvalidInputError("ridge penalty must be non-negative")

    order = canonical_order(X, y)
    X, y = X[order], y[order]
    n, d = X.shape
    A = _design(X)
    penalty = np.full(d + 1, float(ridge))
    penalty[-1] = 0.0

    theta = np.zeros(d + 1)
    objective = penalized_loglik(theta, X, y, ridge)
    grad_norm = np.inf
    for it in range(max_iter + 1):
        p = expit(A @ theta)
        grad = A.T @ (y - p) - penalty * theta
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            return LogisticFit(theta[:-1].copy(), float(theta[-1]), it, grad_norm, True)
        if it == max_iter:
            break
        hess = (A * (p * (1 - p))[:, None]).T @ A + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            candidate = theta + t * step
            cand_obj = penalized_loglik(candidate, X, y, ridge)
            if cand_obj >= objective - 1e-12 * abs(objective):
                break
            t *= 0.5
        theta, objective = candidate, cand_obj

    warnings.warn(f"IRLS did not converge in {max_iter} iterations; "
                  f"final gradient max-norm {grad_norm:.3e}", RuntimeWarning)
    return LogisticFit(theta[:-1].copy(), float(theta[-1]), max_iter, grad_norm, False)


def dataset_hash(X, y) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(y, dtype="<f8").tobytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class SeverityModel:
    feature_names: tuple
    standardizer: Standardizer
    weights: np.ndarray
    bias: float
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        d = len(self.feature_names)
        if not (len(self.weights) == len(self.standardizer.mean) == len(self.standardizer.std) == d):
            raise InvalidInputError("weights and standardizer must match the feature names")
        arrays = (self.weights, self.standardizer.mean, self.standardizer.std, [self.bias])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidInputError("severity model parameters must be finite")

    def flipped(self) -> "SeverityModel":
        """The model with the two classes swapped."""
        return SeverityModel(self.feature_names, self.standardizer, -self.weights,
                             -self.bias, dict(self.manifest))

    def decision(self, X) -> np.ndarray:
        return self.standardizer.transform(X) @ self.weights + self.bias

    def score_matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise SchemaError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return sigmoid(self.decision(X))

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.score_matrix(X) >= threshold).astype(int)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean": [float(v) for v in self.standardizer.mean],
            "std": [float(v) for v in self.standardizer.std],
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "manifest": self.manifest,
        }

    @classmethod
    def from_dict(cls, doc) -> "SeverityModel":
        std = Standardizer(np.array(doc["mean"], dtype=np.float64), np.array(doc["std"], dtype=np.float64))
        return cls(tuple(doc["feature_names"]), std, np.array(doc["weights"], dtype=np.float64),
                   float(doc["bias"]), dict(doc.get("manifest", {})))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SeverityModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_severity_model(X, y, feature_names, ridge: float = 1.0, manifest: dict | None = None) -> SeverityModel:
    """Standardize the raw features and fit the logistic scorer on them."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    std = fit_standardizer(X)
    fit = fit_logistic(std.transform(X), y, ridge=ridge)
    order = canonical_order(X, y)
    info = {
        "dataset_sha256": dataset_hash(X[order], y[order]),
        "n_samples": int(X.shape[0]),
        "ridge": float(ridge),
        "solver": "irls",
        "iterations": fit.iterations,
        "converged": fit.converged,
        "final_grad_max_norm": fit.grad_norm,
    }
    info.update(manifest or {})
    return SeverityModel(tuple(feature_names), std, fit.weights, fit.bias, info)


def score(m: SeverityModel, features) -> float:
    """Severity score in (0, 1) for one image.

    ``features`` is a mapping label -> value (or anything with a ``values``
    mapping, such as ``PathologyFeatures``); its names must match the model.
    """
    values = features if isinstance(features, dict) else getattr(features, "values", features)
    values = dict(values)
    missing = [n for n in m.feature_names if n not in values]
    extra = [n for n in values if n not in m.feature_names]
    if missing or extra:
        raise SchemaError(f"feature names do not match model (missing {missing}, unexpected {extra})")
    x = np.array([values[n] for n in m.feature_names], dtype=np.float64)
    return float(m.score_matrix(x[None, :])[0])
