"""Shallow CART classifier used to check class separability."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError

GAIN_TOL = 1e-12


@dataclass
class TreeNode:
    counts: tuple[int, int]
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def n_samples(self) -> int:
        return self.counts[0] + self.counts[1]

    @property
    def prediction(self) -> int:
        # equal counts go to class 0
        return int(self.counts[1] > self.counts[0])

    def to_dict(self, feature_names=None) -> dict:
        d = {"counts": list(self.counts), "depth": self.depth, "prediction": self.prediction}
        if not self.is_leaf:
            d["feature"] = self.feature
            if feature_names is not None:
                d["feature_name"] = feature_names[self.feature]
            d["threshold"] = self.threshold
            d["left"] = self.left.to_dict(feature_names)
            d["right"] = self.right.to_dict(feature_names)
        return d


def node_from_dict(d) -> TreeNode:
    node = TreeNode(tuple(d["counts"]), d["depth"])
    if "feature" in d:
        node.feature, node.threshold = d["feature"], d["threshold"]
        node.left, node.right = node_from_dict(d["left"]), node_from_dict(d["right"])
    return node


def _gini(c0, c1):
    n = c0 + c1
    return 1.0 - (c0 * c0 + c1 * c1) / (n * n)


def best_split(X, y, min_leaf):
    """Best ``(gain, feature, threshold)`` for one node, or ``None``.

    Thresholds are midpoints between consecutive distinct values. Among
    candidates whose Gini decrease is within ``GAIN_TOL`` of the maximum,
    the lowest feature index and then the lowest threshold wins.
    """
    n = y.size
    total1 = int(y.sum())
    parent = _gini(n - total1, total1)
    candidates = []
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ones_left = np.cumsum(y[order])
        cut = np.nonzero(xs[:-1] < xs[1:])[0]
        n_left = cut + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        cut, n_left, n_right = cut[ok], n_left[ok], n_right[ok]
        if cut.size == 0:
            continue
        l1 = ones_left[cut]
        r1 = total1 - l1
        gini_l = 1.0 - ((n_left - l1) ** 2 + l1 ** 2) / n_left ** 2
        gini_r = 1.0 - ((n_right - r1) ** 2 + r1 ** 2) / n_right ** 2
        gain = parent - n_left / n * gini_l - n_right / n * gini_r
        thresholds = (xs[cut] + xs[cut + 1]) / 2.0
        candidates.append((f, gain, thresholds))
    if not candidates:
        return None
    top = max(float(g.max()) for _, g, _ in candidates)
    if top <= GAIN_TOL:
        return None
    for f, gain, thresholds in candidates:
        hits = np.nonzero(gain >= top - GAIN_TOL)[0]
        if hits.size:
            return float(gain[hits[0]]), f, float(thresholds[hits[0]])
    return None  # pragma: no cover


@dataclass
class TreeModel:
    root: TreeNode
    max_depth: int
    min_leaf: int
    n_features: int

    def _leaf(self, row) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.array([self._leaf(row).prediction for row in X], dtype=int)

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend((node.right, node.left))

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes())

    @property
    def n_internal(self) -> int:
        return sum(not node.is_leaf for node in self.nodes())

    @property
    def n_leaves(self) -> int:
        return sum(node.is_leaf for node in self.nodes())

    @property
    def leaf_sizes(self) -> list[int]:
        return [node.n_samples for node in self.nodes() if node.is_leaf]

    @property
    def used_features(self) -> list[int]:
        return sorted({node.feature for node in self.nodes() if not node.is_leaf})

    def summary(self, feature_names=None) -> dict:
        used = self.used_features
        return {
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "criterion": "gini",
            "thresholds": "midpoints of consecutive distinct values",
            "depth": self.depth,
            "internal_nodes": self.n_internal,
            "leaves": self.n_leaves,
            "leaf_sizes": self.leaf_sizes,
            "used_features": [feature_names[f] for f in used] if feature_names else used,
            "n_used_features": len(used),
            "structure": self.root.to_dict(feature_names),
        }

    def to_dict(self, feature_names=None) -> dict:
        d = self.summary(feature_names)
        d["n_features"] = self.n_features
        return d

    @classmethod
    def from_dict(cls, d) -> "TreeModel":
        return cls(node_from_dict(d["structure"]), d["max_depth"], d["min_leaf"], d["n_features"])


def _grow(X, y, depth, max_depth, min_leaf) -> TreeNode:
    ones = int(y.sum())
    node = TreeNode((int(y.size - ones), ones), depth)
    if depth >= max_depth or ones in (0, y.size) or y.size < 2 * min_leaf:
        return node
    split = best_split(X, y, min_leaf)
    if split is None:
        return node
    _, f, t = split
    go_left = X[:, f] <= t
    node.feature, node.threshold = f, t
    node.left = _grow(X[go_left], y[go_left], depth + 1, max_depth, min_leaf)
    node.right = _grow(X[~go_left], y[~go_left], depth + 1, max_depth, min_leaf)
    return node


def fit_tree(X, y, max_depth: int = 3, min_leaf: int = 10) -> TreeModel:
    """Grow a Gini CART tree limited to ``max_depth`` and ``min_leaf`` samples per leaf.

    A split must strictly reduce impurity; nodes stop growing when pure, at
    ``max_depth`` or when no admissible split is left.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InvalidInputError(f"X has shape {X.shape} but y has {y.size} labels")
    if max_depth < 0 or min_leaf < 1:
        raise InvalidInputError("max_depth must be >= 0 and min_leaf >= 1")
    if y.size < 2 * min_leaf:
        raise InvalidInputError(f"need at least {2 * min_leaf} samples, got {y.size}")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("labels must be 0 or 1")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("non-finite values in training data")
    root = _grow(X, y.astype(np.int64), 0, max_depth, min_leaf)
    return TreeModel(root, max_depth, min_leaf, X.shape[1])
