"""Metadata ingestion, training-label selection and stage-group assignment.

Two CSV layouts are understood:

``cohen``
    training cohort; required columns ``patient_id``, ``file``, ``went_icu``,
    ``in_icu``.
``hanno``
    validation cohort with day offsets; required columns ``patient_id``,
    ``file``, ``day``, ``icu_admit_day``, ``icu_release_day``.

Column aliases such as ``patientid`` and ``filename`` are accepted. Day
offsets are integer days relative to hospital admission.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from enum import Enum, IntEnum
from pathlib import Path, PurePath

from .errors import InvalidInputError, SchemaError
from .imageio import is_image_file

SCHEMAS = ("cohen", "hanno")

ALIASES = {
    "image_id": ("image_id",),
    "patient_id": ("patient_id", "patientid"),
    "file": ("file", "filename"),
    "day": ("day", "offset"),
    "icu_admit_day": ("icu_admit_day",),
    "icu_release_day": ("icu_release_day",),
    "went_icu": ("went_icu",),
    "in_icu": ("in_icu", "in_icu_at_capture"),
}
REQUIRED = {
    "cohen": ("patient_id", "file", "went_icu", "in_icu"),
    "hanno": ("patient_id", "file", "day", "icu_admit_day", "icu_release_day"),
}
OPTIONAL = {
    "cohen": ("image_id", "day"),
    "hanno": ("image_id", "went_icu", "in_icu"),
}


class TriState(str, Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


class TrainingLabel(IntEnum):
    NOT_ICU = 0
    FUTURE_ICU = 1


class StageGroup(str, Enum):
    G1_NOT_ADMITTED = "G1"
    G2_NEAR_ADMISSION = "G2"
    G3_IN_ICU = "G3"
    G4_NEAR_RELEASE = "G4"

    @property
    def description(self):
        return GROUP_DESCRIPTIONS[self]


GROUP_DESCRIPTIONS = {
    StageGroup.G1_NOT_ADMITTED: "not admitted to ICU",
    StageGroup.G2_NEAR_ADMISSION: "within 1 day of ICU admission",
    StageGroup.G3_IN_ICU: "in ICU",
    StageGroup.G4_NEAR_RELEASE: "within 1 day of ICU release",
}
GROUP_ORDER = tuple(StageGroup)
GROUPING_MODES = ("exclusive", "overlapping")

_TRUE = {"y", "yes", "true", "1", "t"}
_FALSE = {"n", "no", "false", "0", "f"}
_MISSING = {"", "na", "nan", "none", "null", "unknown", "?"}


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    patient_id: str
    file: str
    day: int | None = None
    icu_admit_day: int | None = None
    icu_release_day: int | None = None
    went_icu: TriState = TriState.UNKNOWN
    in_icu_at_capture: TriState = TriState.UNKNOWN

    def __post_init__(self):
        if (self.icu_admit_day is not None and self.icu_release_day is not None
                and self.icu_release_day < self.icu_admit_day):
            raise InvalidInputError("icu_release_day precedes icu_admit_day")
        if self.icu_admit_day is not None and self.went_icu is not TriState.YES:
            raise InvalidInputError("ICU admission day given but went_icu is not 'yes'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["went_icu"] = self.went_icu.value
        d["in_icu_at_capture"] = self.in_icu_at_capture.value
        return d

    @classmethod
    def from_dict(cls, d) -> "ImageRecord":
        d = dict(d)
        d["went_icu"] = TriState(d.get("went_icu", "unknown"))
        d["in_icu_at_capture"] = TriState(d.get("in_icu_at_capture", "unknown"))
        return cls(**d)


@dataclass
class Reject:
    row: int
    reason: str
    raw: dict = field(default_factory=dict)


def parse_tristate(text) -> TriState:
    value = (text or "").strip().lower()
    if value in _TRUE:
        return TriState.YES
    if value in _FALSE:
        return TriState.NO
    if value in _MISSING:
        return TriState.UNKNOWN
    raise InvalidInputError(f"cannot read {text!r} as yes/no")


def parse_day(text) -> int | None:
    value = (text or "").strip()
    if value.lower() in _MISSING:
        return None
    try:
        number = float(value)
    except ValueError:
        raise InvalidInputError(f"day offset {text!r} is not a number") from None
    if not number.is_integer():
        raise InvalidInputError(f"day offset {text!r} is not a whole number of days")
    return int(number)


def _resolve_columns(header, schema):
    present = {}
    for canonical in REQUIRED[schema] + OPTIONAL[schema]:
        for alias in ALIASES[canonical]:
            if alias in header:
                present[canonical] = alias
                break
    for canonical in REQUIRED[schema]:
        if canonical not in present:
            raise SchemaError(f"{schema} metadata is missing required column {canonical!r}")
    return present


def _row_to_record(row, cols, schema) -> ImageRecord:
    def get(name):
        return row[cols[name]] if name in cols else None

    patient = (get("patient_id") or "").strip()
    file = (get("file") or "").strip()
    if not patient:
        raise InvalidInputError("empty patient_id")
    if not is_image_file(file):
        raise InvalidInputError(f"unrecognised image file {file!r}")
    image_id = (get("image_id") or "").strip() or PurePath(file).stem

    day = parse_day(get("day")) if "day" in cols else None
    if schema == "cohen":
        return ImageRecord(image_id, patient, file, day=day,
                           went_icu=parse_tristate(get("went_icu")),
                           in_icu_at_capture=parse_tristate(get("in_icu")))

    admit = parse_day(get("icu_admit_day"))
    release = parse_day(get("icu_release_day"))
    if "went_icu" in cols:
        went = parse_tristate(get("went_icu"))
        if went is TriState.UNKNOWN and admit is not None:
            went = TriState.YES
    else:
        went = TriState.YES if admit is not None else TriState.NO
    if "in_icu" in cols:
        in_icu = parse_tristate(get("in_icu"))
    elif day is None:
        in_icu = TriState.UNKNOWN
    elif admit is None:
        in_icu = TriState.NO
    else:
        inside = day >= admit and (release is None or day <= release)
        in_icu = TriState.YES if inside else TriState.NO
    return ImageRecord(image_id, patient, file, day, admit, release, went, in_icu)


def parse_metadata(source, schema: str) -> tuple[list[ImageRecord], list[Reject]]:
    """Read a metadata CSV (path or open text file).

    Returns the accepted records and a list of rejected rows with reasons.
    Row numbers count the header as row 1.
    """
    if schema not in SCHEMAS:
        raise InvalidInputError(f"unknown schema {schema!r}; choose from {SCHEMAS}")
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_metadata(fh, schema)

    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise SchemaError("metadata has no header row")
    header = [name.strip() for name in reader.fieldnames]
    reader.fieldnames = header
    cols = _resolve_columns(header, schema)

    records, rejects, seen = [], [], set()
    for rowno, row in enumerate(reader, start=2):
        try:
            rec = _row_to_record(row, cols, schema)
        except InvalidInputError as exc:
            rejects.append(Reject(rowno, str(exc), dict(row)))
            continue
        if rec.image_id in seen:
            rejects.append(Reject(rowno, f"duplicate image_id {rec.image_id!r}", dict(row)))
            continue
        seen.add(rec.image_id)
        records.append(rec)
    return records, rejects


def _fmt_day(value):
    return "" if value is None else str(value)


def write_metadata_csv(records, path, schema: str) -> None:
    """Write records back in the canonical column layout of ``schema``."""
    if schema == "cohen":
        header = ["image_id", "patient_id", "file", "day", "went_icu", "in_icu"]
    else:
        header = ["image_id", "patient_id", "file", "day", "icu_admit_day",
                  "icu_release_day", "went_icu", "in_icu"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in records:
            row = {
                "image_id": r.image_id, "patient_id": r.patient_id, "file": r.file,
                "day": _fmt_day(r.day), "icu_admit_day": _fmt_day(r.icu_admit_day),
                "icu_release_day": _fmt_day(r.icu_release_day),
                "went_icu": r.went_icu.value, "in_icu": r.in_icu_at_capture.value,
            }
            writer.writerow([row[h] for h in header])


def write_records_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records_jsonl(path) -> list[ImageRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ImageRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_rejects_csv(rejects, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "reason", "raw"])
        for r in rejects:
            writer.writerow([r.row, r.reason, json.dumps(r.raw, sort_keys=True)])


def read_include_list(path) -> set[str]:
    """One image id or file name per line; ``#`` starts a comment."""
    ids = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            entry = line.split("#", 1)[0].strip()
            if entry:
                ids.add(entry)
    return ids


def apply_include_list(records, include) -> tuple[list[ImageRecord], list[str]]:
    kept, dropped = [], []
    for r in records:
        if r.image_id in include or r.file in include or PurePath(r.file).name in include:
            kept.append(r)
        else:
            dropped.append(r.image_id)
    return kept, dropped


def training_label(r: ImageRecord) -> TrainingLabel | None:
    if r.went_icu is TriState.YES and r.in_icu_at_capture is TriState.NO:
        return TrainingLabel.FUTURE_ICU
    if r.went_icu is TriState.NO:
        return TrainingLabel.NOT_ICU
    return None


def derive_training_labels(records) -> tuple[list[tuple[ImageRecord, TrainingLabel]], dict]:
    """Select training images and label them.

    Images taken before an eventual ICU admission are ``FUTURE_ICU``; images
    of patients never admitted are ``NOT_ICU``. Everything else is excluded
    and tallied by reason.
    """
    labelled = []
    excluded = {"in_icu_at_capture": 0, "icu_status_unknown": 0}
    for r in records:
        label = training_label(r)
        if label is not None:
            labelled.append((r, label))
        elif r.went_icu is TriState.YES:
            excluded["in_icu_at_capture" if r.in_icu_at_capture is TriState.YES
                     else "icu_status_unknown"] += 1
        else:
            excluded["icu_status_unknown"] += 1
    return labelled, excluded


def matching_groups(r: ImageRecord) -> frozenset:
    """All stage groups whose window contains the image's capture day."""
    if r.day is None:
        raise InvalidInputError(f"image {r.image_id} has no day offset")
    if r.icu_admit_day is None:
        if r.went_icu is TriState.YES:
            return frozenset()
        return frozenset({StageGroup.G1_NOT_ADMITTED})
    day, admit, release = r.day, r.icu_admit_day, r.icu_release_day
    groups = set()
    if abs(day - admit) <= 1:
        groups.add(StageGroup.G2_NEAR_ADMISSION)
    if release is not None and abs(day - release) <= 1:
        groups.add(StageGroup.G4_NEAR_RELEASE)
    # no release day: the stay is treated as still open
    if day >= admit + 1 and (release is None or day <= release - 1):
        groups.add(StageGroup.G3_IN_ICU)
    return frozenset(groups)


_PRECEDENCE = (StageGroup.G1_NOT_ADMITTED, StageGroup.G2_NEAR_ADMISSION,
               StageGroup.G4_NEAR_RELEASE, StageGroup.G3_IN_ICU)


def assign_group(r: ImageRecord, mode: str = "exclusive"):
    """Stage group of an image.

    ``exclusive`` returns one group or ``None`` using precedence
    G1 > G2 > G4 > G3; ``overlapping`` returns the (possibly empty) set of
    all matching groups.
    """
    groups = matching_groups(r)
    if mode == "overlapping":
        return groups
    if mode != "exclusive":
        raise InvalidInputError(f"unknown grouping mode {mode!r}")
    for g in _PRECEDENCE:
        if g in groups:
            return g
    return None


def assign_groups(records, mode: str = "exclusive") -> tuple[dict, dict]:
    """Assign every record; returns ``(assignments, unassigned)``.

    ``assignments`` maps image id to a group (exclusive) or a non-empty
    frozenset (overlapping); ``unassigned`` maps image id to a reason.
    """
    assignments, unassigned = {}, {}
    for r in records:
        try:
            result = assign_group(r, mode)
        except InvalidInputError as exc:
            if mode not in GROUPING_MODES:
                raise
            unassigned[r.image_id] = str(exc)
            continue
        if result is None or result == frozenset():
            unassigned[r.image_id] = "capture day outside every group window"
        else:
            assignments[r.image_id] = result
    return assignments, unassigned


def group_counts(assignments) -> dict:
    counts = {g.value: 0 for g in GROUP_ORDER}
    for value in assignments.values():
        for g in (value if isinstance(value, frozenset) else (value,)):
            counts[g.value] += 1
    return counts
