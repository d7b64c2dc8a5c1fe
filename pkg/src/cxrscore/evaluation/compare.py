"""Side-by-side evaluation of the native score and externally produced scores."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from ..errors import InvalidInputError, SchemaError, ScoreRangeError
from .stats import group_scores
from .trend import trend_check

# declared ranges of common external severity scales
KNOWN_RANGES = {
    "opacity": (0.0, 6.0),
    "geographic_extent": (0.0, 8.0),
    "brixia": (0.0, 18.0),
}


@dataclass
class ExternalScoreSet:
    method: str
    low: float
    high: float
    scores: dict = field(default_factory=dict)

    def validate(self) -> None:
        for image_id in sorted(self.scores):
            value = self.scores[image_id]
            if not (math.isfinite(value) and self.low <= value <= self.high):
                raise ScoreRangeError(
                    f"method {self.method!r}: score {value!r} for image {image_id!r} "
                    f"is outside the declared range [{self.low:g}, {self.high:g}]")


def load_external_scores(path, method, score_range=None) -> ExternalScoreSet:
    """Read a two-column CSV (``image_id``, ``score``)."""
    if score_range is None:
        if method not in KNOWN_RANGES:
            raise InvalidInputError(f"no declared range for external method {method!r}")
        score_range = KNOWN_RANGES[method]
    scores = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_id", "score"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: external scores need 'image_id' and 'score' columns")
        for row in reader:
            try:
                scores[row["image_id"].strip()] = float(row["score"])
            except ValueError:
                raise ScoreRangeError(
                    f"method {method!r}: unreadable score {row['score']!r} "
                    f"for image {row['image_id']!r}") from None
    ext = ExternalScoreSet(method, float(score_range[0]), float(score_range[1]), scores)
    ext.validate()
    return ext


def spearman(a, b) -> float | None:
    """Spearman rank correlation; ``None`` when undefined (constant input or n < 2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return None
    rho = spearmanr(a, b).statistic
    return None if not np.isfinite(rho) else float(rho)


def compare_methods(native, externals, assignments, native_name="severity",
                    native_range=(0.0, 1.0), enabled=None) -> dict:
    """Apply the same grouping to every scorer.

    Returns per-method grouping results and trend reports, plus a Spearman
    matrix over the images every scorer has scored.
    """
    methods = {native_name: (dict(native), native_range)}
    for ext in externals:
        ext.validate()
        if ext.method in methods:
            raise InvalidInputError(f"duplicate scorer name {ext.method!r}")
        methods[ext.method] = (dict(ext.scores), (ext.low, ext.high))

    per_method = {}
    for name, (scores, rng) in methods.items():
        grouping = group_scores(assignments, scores)
        per_method[name] = {
            "range": list(rng),
            "grouping": grouping,
            "trend": trend_check(grouping.stats, enabled),
        }

    names = list(methods)
    common = sorted(set.intersection(*(set(s) for s, _ in methods.values())))
    matrix = []
    for a in names:
        row = []
        for b in names:
            row.append(spearman([methods[a][0][i] for i in common],
                                [methods[b][0][i] for i in common]))
        matrix.append(row)
    return {
        "methods": per_method,
        "spearman": {"methods": names, "n_common": len(common), "matrix": matrix},
    }
