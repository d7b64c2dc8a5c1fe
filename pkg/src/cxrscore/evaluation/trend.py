"""Expected-trend predicates over per-group score statistics.

Severity should be lowest for patients never admitted to ICU (G1), high
around admission (G2) and during the stay (G3), and lower again near
release (G4). Each predicate can be switched off individually.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

PASS, FAIL, NOT_EVALUABLE, DISABLED = "pass", "fail", "not-evaluable", "disabled"
OTHERS = ("G2", "G3", "G4")

PREDICATES = {
    "P1": ("q3(G1) < q1(Gk) for k in G2, G3, G4",
           "G1 upper quartile is compared against each other group's lower quartile"),
    "P2": ("median(G2) >= median(G4)",
           "scores near ICU admission are at least as high as near release"),
    "P3": ("median(G1) < median(Gk) for k in G2, G3, G4",
           "patients never admitted have the lowest median"),
    "P4": ("median(G4) <= median(G3)",
           "scores near release do not exceed scores during the ICU stay"),
}


@dataclass
class PredicateResult:
    name: str
    relation: str
    interpretation: str
    status: str
    observed: dict = field(default_factory=dict)
    comparisons: list = field(default_factory=list)


@dataclass
class TrendReport:
    predicates: list
    overall: str
    summary: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def by_name(self, name) -> PredicateResult:
        return next(p for p in self.predicates if p.name == name)


def _stat(stats, group, key):
    s = stats[group]
    return s[key] if isinstance(s, dict) else getattr(s, key)


def _compare(stats, left, right, op):
    lg, lk = left
    rg, rk = right
    a, b = _stat(stats, lg, lk), _stat(stats, rg, rk)
    ok = {"<": a < b, "<=": a <= b, ">=": a >= b}[op]
    return {"lhs": f"{lk}({lg})", "rhs": f"{rk}({rg})", "op": op,
            "lhs_value": a, "rhs_value": b, "holds": bool(ok)}


def _candidate_readings(stats, groups):
    """Every quartile of the compared groups, so alternative readings can be checked."""
    return {g: {k: _stat(stats, g, k) for k in ("q1", "median", "q3")} for g in groups}


def _evaluate(name, stats):
    if name == "P1":
        needed = ("G1",) + OTHERS
        pairs = [(("G1", "q3"), (g, "q1"), "<") for g in OTHERS]
    elif name == "P2":
        needed = ("G2", "G4")
        pairs = [(("G2", "median"), ("G4", "median"), ">=")]
    elif name == "P3":
        needed = ("G1",) + OTHERS
        pairs = [(("G1", "median"), (g, "median"), "<") for g in OTHERS]
    else:
        needed = ("G4", "G3")
        pairs = [(("G4", "median"), ("G3", "median"), "<=")]
    missing = [g for g in needed if g not in stats]
    if missing:
        return NOT_EVALUABLE, {"missing_groups": missing}, []
    comparisons = [_compare(stats, *p) for p in pairs]
    observed = _candidate_readings(stats, needed)
    status = PASS if all(c["holds"] for c in comparisons) else FAIL
    return status, observed, comparisons


def trend_check(stats, enabled=None) -> TrendReport:
    """Evaluate the default predicates P1..P4.

    ``stats`` maps group value ('G1'..'G4') to :class:`GroupStats` or its
    dict form; empty groups are simply absent. ``enabled`` optionally maps
    predicate name to a bool.
    """
    enabled = {name: True for name in PREDICATES} | dict(enabled or {})
    results = []
    for name, (relation, interpretation) in PREDICATES.items():
        if not enabled.get(name, True):
            results.append(PredicateResult(name, relation, interpretation, DISABLED))
            continue
        status, observed, comparisons = _evaluate(name, stats)
        results.append(PredicateResult(name, relation, interpretation, status, observed, comparisons))
    tally = {s: sum(r.status == s for r in results) for s in (PASS, FAIL, NOT_EVALUABLE, DISABLED)}
    if tally[FAIL]:
        overall = FAIL
    elif tally[NOT_EVALUABLE]:
        overall = "incomplete"
    else:
        overall = PASS
    return TrendReport(results, overall, tally)
