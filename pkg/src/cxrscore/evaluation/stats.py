"""Box-and-whisker statistics per stage group."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import GROUP_ORDER, StageGroup
from ..errors import InvalidInputError

QUANTILE_CONVENTION = "linear interpolation between order statistics at index p*(n-1)"
WHISKER_RULE = "most extreme data points within 1.5*IQR of the quartiles (Tukey)"
WHISKER_FACTOR = 1.5


@dataclass(frozen=True)
class GroupStats:
    group: str | None
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "GroupStats":
        return cls(**d)


def box_stats(scores, group=None) -> GroupStats:
    x = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    if x.size == 0:
        raise InvalidInputError("box statistics need at least one score")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("scores must be finite")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo_fence = q1 - WHISKER_FACTOR * iqr
    hi_fence = q3 + WHISKER_FACTOR * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = x[(x < lo_fence) | (x > hi_fence)]
    return GroupStats(
        group=None if group is None else getattr(group, "value", group),
        n=int(x.size),
        min=float(x[0]), q1=float(q1), median=float(med), q3=float(q3), max=float(x[-1]),
        iqr=float(iqr),
        whisker_low=float(inside[0]), whisker_high=float(inside[-1]),
        outliers=[float(v) for v in outliers],
    )


@dataclass
class GroupingResult:
    stats: dict
    counts: dict
    empty_groups: list
    unassigned: list
    unscored: list

    def to_dict(self) -> dict:
        return {
            "stats": {g: s.to_dict() for g, s in self.stats.items()},
            "counts": dict(self.counts),
            "empty_groups": list(self.empty_groups),
            "unassigned": list(self.unassigned),
            "unscored": list(self.unscored),
        }


def _groups_of(value):
    if isinstance(value, (set, frozenset, list, tuple)):
        return value
    return (value,)


def group_scores(assignments, scores) -> GroupingResult:
    """Box statistics per group.

    ``assignments`` maps image id to a :class:`StageGroup` (or a set of them
    for overlapping grouping); ``scores`` maps image id to a score. Scored
    images without a group and grouped images without a score are listed.
    """
    buckets = {g.value: [] for g in GROUP_ORDER}
    for image_id in sorted(scores):
        if image_id not in assignments:
            continue
        for g in _groups_of(assignments[image_id]):
            buckets[StageGroup(g).value].append(scores[image_id])
    stats = {g: box_stats(v, g) for g, v in buckets.items() if v}
    return GroupingResult(
        stats=stats,
        counts={g: len(v) for g, v in buckets.items()},
        empty_groups=[g for g, v in buckets.items() if not v],
        unassigned=sorted(set(scores) - set(assignments)),
        unscored=sorted(set(assignments) - set(scores)),
    )
