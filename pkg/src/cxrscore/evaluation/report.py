"""Assemble and write the evaluation report bundle (JSON, CSV and SVG figures)."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..dataset import GROUP_DESCRIPTIONS, GROUPING_MODES, assign_groups, group_counts
from ..errors import InvalidInputError
from . import plotting
from .compare import compare_methods
from .stats import QUANTILE_CONVENTION, WHISKER_RULE

STATS_COLUMNS = ["method", "group", "n", "min", "q1", "median", "q3", "max", "iqr",
                 "whisker_low", "whisker_high", "n_outliers"]


def _clean(obj):
    """Make ``obj`` strict-JSON safe (NaN/inf become null, sets become sorted lists)."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(_clean(getattr(v, "value", v)) for v in obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def _group_value(assignment):
    if isinstance(assignment, frozenset):
        return sorted(g.value for g in assignment)
    return assignment.value


def build_report(scores, records, mode="exclusive", externals=(), enabled=None,
                 native_name="severity", extra=None) -> dict:
    """Group and compare scores, returning a JSON-ready report dict.

    ``scores`` maps image id to the native severity score; ``records`` are
    the validation-cohort :class:`ImageRecord` objects.
    """
    assignments, unassigned = assign_groups(records, mode)
    comparison = compare_methods(scores, externals, assignments, native_name, enabled=enabled)

    methods = {}
    for name, block in comparison["methods"].items():
        methods[name] = {
            "range": block["range"],
            **block["grouping"].to_dict(),
            "trend": block["trend"].to_dict(),
        }

    all_scores = {native_name: scores}
    all_scores.update({e.method: e.scores for e in externals})
    images = []
    for r in sorted(records, key=lambda r: r.image_id):
        images.append({
            "image_id": r.image_id,
            "patient_id": r.patient_id,
            "day": r.day,
            "icu_admit_day": r.icu_admit_day,
            "icu_release_day": r.icu_release_day,
            "group": _group_value(assignments[r.image_id]) if r.image_id in assignments else None,
            "scores": {m: s[r.image_id] for m, s in all_scores.items() if r.image_id in s},
        })

    report = {
        "report": "stage-group evaluation",
        "native_method": native_name,
        "conventions": {
            "quantiles": QUANTILE_CONVENTION,
            "whiskers": WHISKER_RULE,
            "grouping_mode": mode,
            "exclusive_precedence": "G1 > G2 > G4 > G3",
            "vicinity": "closed interval of +/-1 day",
        },
        "groups": {g.value: d for g, d in GROUP_DESCRIPTIONS.items()},
        "group_counts": group_counts(assignments),
        "group_counts_by_mode": {m: group_counts(assign_groups(records, m)[0]) for m in GROUPING_MODES},
        "unassigned_images": dict(sorted(unassigned.items())),
        "methods": methods,
        "spearman": comparison["spearman"],
        "images": images,
    }
    if not any(m["stats"] for m in methods.values()):
        raise InvalidInputError("no scored image fell into any group; nothing to report")
    if extra:
        report.update(extra)
    return _clean(report)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_stats_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STATS_COLUMNS)
        for method, block in report["methods"].items():
            for group in sorted(block["stats"]):
                s = block["stats"][group]
                writer.writerow([method, group] + [repr(s[k]) if isinstance(s[k], float) else s[k]
                                                   for k in STATS_COLUMNS[2:-1]]
                                + [len(s["outliers"])])


def render_figures(report, out_dir) -> list[str]:
    """Draw one box plot per scorer and one timeline per patient."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with plotting.style():
        for method, block in report["methods"].items():
            name = f"box_{plotting.slug(method)}.svg"
            fig = plotting.box_figure(block["stats"], f"{method} score by stage group",
                                      f"{method} score", ylim=block.get("range"))
            plotting.save_svg(fig, out_dir / name)
            written.append(name)

        native = report["native_method"]
        by_patient = {}
        for img in report["images"]:
            if img["day"] is None or native not in img["scores"]:
                continue
            by_patient.setdefault(img["patient_id"], []).append(img)
        for patient in sorted(by_patient):
            imgs = by_patient[patient]
            points = [(i["day"], i["scores"][native]) for i in imgs]
            admit = next((i["icu_admit_day"] for i in imgs if i["icu_admit_day"] is not None), None)
            release = next((i["icu_release_day"] for i in imgs if i["icu_release_day"] is not None), None)
            name = f"timeline_{plotting.slug(patient)}.svg"
            fig = plotting.timeline_figure(points, f"patient {patient}", admit, release)
            plotting.save_svg(fig, out_dir / name)
            written.append(name)
    return written


def emit_report(report, out_dir) -> list[str]:
    """Write ``report.json``, ``group_stats.csv`` and the SVG figures into ``out_dir``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc
    figures = render_figures(report, out_dir)
    report = dict(report, figures=figures)
    write_json(report, out_dir / "report.json")
    write_stats_csv(report, out_dir / "group_stats.csv")
    return ["report.json", "group_stats.csv"] + figures
