"""Pipeline configuration read from a YAML document."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .dataset import GROUPING_MODES
from .errors import InvalidInputError
from .evaluation.compare import KNOWN_RANGES
from .evaluation.trend import PREDICATES
from .imgproc import ClaheParams

PATH_KEYS = ("images_dir", "cohen_csv", "hanno_csv", "include_list",
             "segmentation_spec", "pathology_spec", "output_dir")


@dataclass(frozen=True)
class Paths:
    images_dir: str | None = None
    cohen_csv: str | None = None
    hanno_csv: str | None = None
    include_list: str | None = None
    segmentation_spec: str | None = None
    pathology_spec: str | None = None
    output_dir: str = "output"


@dataclass(frozen=True)
class ImgprocParams:
    clahe_tiles: tuple[int, int] = (8, 8)
    clahe_clip: float = 2.0
    threshold: float = 0.5
    close_radius: int = 5
    components: int = 2
    margin: int = 0

    @property
    def clahe(self) -> ClaheParams:
        return ClaheParams(tuple(self.clahe_tiles), self.clahe_clip)


@dataclass(frozen=True)
class LearnParams:
    ridge: float = 1.0
    threshold: float = 0.5
    max_depth: int = 3
    min_leaf: int = 10


@dataclass(frozen=True)
class ExternalSpec:
    method: str
    path: str
    range: tuple[float, float] | None = None


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    imgproc: ImgprocParams = field(default_factory=ImgprocParams)
    learn: LearnParams = field(default_factory=LearnParams)
    grouping: str = "exclusive"
    predicates: dict = field(default_factory=lambda: {name: True for name in PREDICATES})
    external_scores: tuple = ()
    jobs: int = 1
    # directory relative paths were resolved against; hashed paths are relative to it
    base_dir: str = "."

    def __post_init__(self):
        self.imgproc.clahe  # validates tile grid and clip factor
        ip, lp = self.imgproc, self.learn
        if not 0.0 <= ip.threshold <= 1.0:
            raise InvalidInputError(f"imgproc.threshold must lie in [0, 1], got {ip.threshold}")
        if ip.close_radius < 0 or ip.components < 1 or ip.margin < 0:
            raise InvalidInputError("close_radius and margin must be >= 0 and components >= 1")
        if lp.ridge < 0:
            raise InvalidInputError(f"learn.ridge must be >= 0, got {lp.ridge}")
        if not 0.0 < lp.threshold < 1.0:
            raise InvalidInputError(f"learn.threshold must lie in (0, 1), got {lp.threshold}")
        if lp.max_depth < 0 or lp.min_leaf < 1:
            raise InvalidInputError("learn.max_depth must be >= 0 and learn.min_leaf >= 1")
        if self.grouping not in GROUPING_MODES:
            raise InvalidInputError(f"grouping must be one of {GROUPING_MODES}, got {self.grouping!r}")
        unknown = set(self.predicates) - set(PREDICATES)
        if unknown:
            raise InvalidInputError(f"unknown trend predicates {sorted(unknown)}")
        if self.jobs < 1:
            raise InvalidInputError(f"jobs must be >= 1, got {self.jobs}")
        for ext in self.external_scores:
            if ext.range is None and ext.method not in KNOWN_RANGES:
                raise InvalidInputError(f"external method {ext.method!r} needs an explicit range")

    def validate_paths(self) -> None:
        """Every configured input path must exist (the output dir is created on demand)."""
        for key in PATH_KEYS[:-1]:
            value = getattr(self.paths, key)
            if value is not None and not Path(value).exists():
                raise InvalidInputError(f"paths.{key} does not exist: {value}")
        for ext in self.external_scores:
            if not Path(ext.path).is_file():
                raise InvalidInputError(f"external scores for {ext.method!r} not found: {ext.path}")

    def require(self, *keys) -> None:
        missing = [k for k in keys if getattr(self.paths, k) is None]
        if missing:
            raise InvalidInputError(f"config is missing paths: {', '.join(missing)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["external_scores"] = [asdict(e) for e in self.external_scores]
        return d

    def hashable(self) -> dict:
        """Config content with paths made relative, so relocating a project keeps its hash."""
        def rel(value):
            return None if value is None else os.path.relpath(value, self.base_dir)

        d = self.to_dict()
        del d["base_dir"], d["jobs"]
        d["paths"] = {k: rel(v) for k, v in d["paths"].items()}
        for ext in d["external_scores"]:
            ext["path"] = rel(ext["path"])
        return d

    def sha256(self) -> str:
        blob = json.dumps(self.hashable(), sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def output_dir(self) -> Path:
        return Path(self.paths.output_dir)

    def with_overrides(self, jobs=None, grouping=None) -> "PipelineConfig":
        changes = {}
        if jobs is not None:
            changes["jobs"] = jobs
        if grouping is not None:
            changes["grouping"] = grouping
        return replace(self, **changes) if changes else self


def _section(doc, name, cls):
    raw = doc.get(name) or {}
    if not isinstance(raw, dict):
        raise InvalidInputError(f"config section {name!r} must be a mapping")
    unknown = set(raw) - set(cls.__dataclass_fields__)
    if unknown:
        raise InvalidInputError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return raw


def config_from_dict(doc: dict, base_dir=".") -> PipelineConfig:
    """Build a config; relative paths are resolved against ``base_dir``."""
    base = Path(base_dir)
    top = set(doc) - {"paths", "imgproc", "learn", "grouping", "predicates", "external_scores", "jobs"}
    if top:
        raise InvalidInputError(f"unknown config keys {sorted(top)}")

    def resolve(value):
        return None if value is None else str((base / str(value)).resolve())

    paths = {k: resolve(v) for k, v in _section(doc, "paths", Paths).items()}
    paths.setdefault("output_dir", resolve("output"))
    imgproc = dict(_section(doc, "imgproc", ImgprocParams))
    if "clahe_tiles" in imgproc:
        imgproc["clahe_tiles"] = tuple(int(v) for v in imgproc["clahe_tiles"])
    externals = []
    for entry in doc.get("external_scores") or []:
        rng = entry.get("range")
        externals.append(ExternalSpec(str(entry["method"]), resolve(entry["path"]),
                                      None if rng is None else (float(rng[0]), float(rng[1]))))
    predicates = {name: True for name in PREDICATES}
    predicates.update({str(k): bool(v) for k, v in (doc.get("predicates") or {}).items()})
    return PipelineConfig(
        paths=Paths(**paths),
        imgproc=ImgprocParams(**imgproc),
        learn=LearnParams(**_section(doc, "learn", LearnParams)),
        grouping=doc.get("grouping", "exclusive"),
        predicates=predicates,
        external_scores=tuple(externals),
        jobs=int(doc.get("jobs", 1)),
        base_dir=str(base.resolve()),
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise InvalidInputError(f"{path}: config must be a mapping")
    return config_from_dict(doc, path.parent)
