"""Loading and running the pretrained lung segmenter and pathology classifier.

Real networks are ONNX files described by a YAML sidecar (a ``ModelSpec``).
A deterministic mock runner stands in for them when no weights are available.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import (
    InferenceError,
    InvalidInputError,
    MissingLabelsError,
    ModelFileNotFoundError,
    ModelLoadError,
    TensorMismatchError,
)
from .imgproc import as_gray, resize_float

PER_PIXEL_MAP = "per-pixel-map"
LABEL_VECTOR = "label-vector"
OUTPUT_KINDS = (PER_PIXEL_MAP, LABEL_VECTOR)

REQUIRED_PATHOLOGY_LABELS = (
    "Effusion", "Consolidation", "Pneumonia", "Fracture", "Pleural Thickening",
)

# Used by the mock pathology model when a spec does not list labels.
DEFAULT_PATHOLOGY_LABELS = (
    "Atelectasis", "Consolidation", "Infiltration", "Pneumothorax", "Edema",
    "Emphysema", "Fibrosis", "Effusion", "Pneumonia", "Pleural Thickening",
    "Cardiomegaly", "Nodule", "Mass", "Hernia", "Lung Lesion", "Fracture",
    "Lung Opacity", "Enlarged Cardiomediastinum",
)

DEFAULT_INPUT_SIZE = {PER_PIXEL_MAP: (256, 256), LABEL_VECTOR: (224, 224)}
MOCK_MODES = ("constant", "half-plane", "mean-pixel")
DEFAULT_MOCK = {
    PER_PIXEL_MAP: {"mode": "half-plane"},
    LABEL_VECTOR: {"mode": "mean-pixel"},
}


@dataclass(frozen=True)
class ModelSpec:
    output_kind: str
    model_path: str | None = None
    input_name: str = "input"
    output_name: str = "output"
    input_size: tuple[int, int] | None = None
    normalization: dict = field(default_factory=lambda: {"value_range": [0.0, 1.0]})
    labels: tuple[str, ...] = ()
    mock: dict | None = None

    def __post_init__(self):
        if self.output_kind not in OUTPUT_KINDS:
            raise InvalidInputError(f"output_kind must be one of {OUTPUT_KINDS}, got {self.output_kind!r}")
        size = self.input_size or DEFAULT_INPUT_SIZE[self.output_kind]
        size = (int(size[0]), int(size[1]))
        if size[0] < 1 or size[1] < 1:
            raise InvalidInputError(f"input_size must be positive, got {size}")
        object.__setattr__(self, "input_size", size)
        labels = tuple(self.labels)
        if self.output_kind == LABEL_VECTOR and not labels:
            labels = DEFAULT_PATHOLOGY_LABELS
        object.__setattr__(self, "labels", labels)
        norm = dict(self.normalization)
        if "value_range" not in norm and not {"mean", "std"} <= set(norm):
            raise InvalidInputError("normalization needs 'value_range' or both 'mean' and 'std'")
        object.__setattr__(self, "normalization", norm)

    @classmethod
    def from_file(cls, path) -> "ModelSpec":
        """Read a YAML sidecar; ``model_path`` is resolved relative to it."""
        path = Path(path)
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InvalidInputError(f"{path}: unknown model spec keys {sorted(unknown)}")
        if doc.get("model_path"):
            doc["model_path"] = str((path.parent / doc["model_path"]).resolve())
        if "input_size" in doc and doc["input_size"] is not None:
            doc["input_size"] = tuple(doc["input_size"])
        if "labels" in doc:
            doc["labels"] = tuple(doc["labels"] or ())
        return cls(**doc)


@dataclass(frozen=True)
class PathologyFeatures:
    image_id: str
    values: dict

    def vector(self) -> np.ndarray:
        return np.array(list(self.values.values()), dtype=np.float64)


def _normalize(arr: np.ndarray, norm: dict) -> np.ndarray:
    unit = arr / 255.0
    if "value_range" in norm:
        lo, hi = norm["value_range"]
        return lo + unit * (hi - lo)
    return (unit - float(norm["mean"])) / float(norm["std"])


class MockRunner:
    """Deterministic stand-in for a network.

    ``constant`` emits ``value`` everywhere, ``half-plane`` marks the left
    half of the image as foreground and ``mean-pixel`` emits the image's mean
    intensity divided by 255.
    """

    def __init__(self, kind, mode="constant", value=1.0, n_outputs=1):
        if mode not in MOCK_MODES:
            raise InvalidInputError(f"unknown mock mode {mode!r}; choose from {MOCK_MODES}")
        self.kind = kind
        self.mode = mode
        self.value = float(value)
        self.n_outputs = n_outputs

    @property
    def fingerprint(self):
        return f"mock:{self.mode}:{self.value!r}"

    def __call__(self, img: np.ndarray) -> np.ndarray:
        h, w = img.shape
        if self.kind == PER_PIXEL_MAP:
            if self.mode == "constant":
                return np.full((h, w), self.value)
            if self.mode == "half-plane":
                out = np.zeros((h, w))
                out[:, : w // 2] = 1.0
                return out
            return np.full((h, w), img.mean() / 255.0)
        if self.mode == "mean-pixel":
            return np.full(self.n_outputs, img.mean() / 255.0)
        if self.mode == "half-plane":
            return np.full(self.n_outputs, img[:, : w // 2].mean() / 255.0 if w > 1 else 0.0)
        return np.full(self.n_outputs, self.value)


def _static_dims(shape):
    return [d if isinstance(d, int) and d > 0 else None for d in shape]


class OnnxRunner:
    def __init__(self, spec: ModelSpec):
        try:
            import onnxruntime as ort
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise ModelLoadError("onnxruntime is required to run real models; "
                                 "install with `pip install cxrscore[onnx]`") from exc
        opts = ort.SessionOptions()
        opts.intra_op_num_threads = 1
        opts.inter_op_num_threads = 1
        try:
            self.session = ort.InferenceSession(spec.model_path, sess_options=opts,
                                                providers=["CPUExecutionProvider"])
        except Exception as exc:
            raise ModelLoadError(f"cannot parse model {spec.model_path}: {exc}") from exc
        self.spec = spec
        self.channels = self._check_input()
        self._check_output()

    def _check_input(self) -> int:
        spec = self.spec
        inputs = {i.name: i for i in self.session.get_inputs()}
        if spec.input_name not in inputs:
            raise TensorMismatchError(
                f"input tensor {spec.input_name!r} not found in {spec.model_path}; "
                f"available: {sorted(inputs)}")
        dims = _static_dims(inputs[spec.input_name].shape)
        if len(dims) != 4:
            raise TensorMismatchError(f"input tensor {spec.input_name!r} must be NCHW, got shape {dims}")
        _, c, h, w = dims
        if c not in (None, 1, 3):
            raise TensorMismatchError(f"input tensor {spec.input_name!r} has {c} channels; expected 1 or 3")
        for declared, actual in zip(spec.input_size, (h, w)):
            if actual is not None and actual != declared:
                raise TensorMismatchError(
                    f"input tensor {spec.input_name!r} expects {h}x{w}, spec declares {spec.input_size}")
        return c or 1

    def _check_output(self):
        spec = self.spec
        outputs = {o.name: o for o in self.session.get_outputs()}
        if spec.output_name not in outputs:
            raise TensorMismatchError(
                f"output tensor {spec.output_name!r} not found in {spec.model_path}; "
                f"available: {sorted(outputs)}")
        dims = _static_dims(outputs[spec.output_name].shape)
        if spec.output_kind == LABEL_VECTOR:
            if len(dims) != 2 or dims[1] not in (None, len(spec.labels)):
                raise TensorMismatchError(
                    f"output tensor {spec.output_name!r} has shape {dims}; "
                    f"expected [N, {len(spec.labels)}]")
        elif len(dims) not in (3, 4):
            raise TensorMismatchError(
                f"output tensor {spec.output_name!r} has shape {dims}; expected a per-pixel map")

    @property
    def fingerprint(self):
        return _file_sha256(self.spec.model_path)

    def __call__(self, img: np.ndarray) -> np.ndarray:
        h_in, w_in = self.spec.input_size
        x = _normalize(resize_float(img, w_in, h_in), self.spec.normalization)
        x = np.repeat(x[None, None].astype(np.float32), self.channels, axis=1)
        (out,) = self.session.run([self.spec.output_name], {self.spec.input_name: x})
        out = np.asarray(out, dtype=np.float64)
        if self.spec.output_kind == LABEL_VECTOR:
            return out.reshape(-1)
        out = out.reshape(out.shape[-2], out.shape[-1])
        return resize_float(out, img.shape[1], img.shape[0])


def _file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class ModelHandle:
    spec: ModelSpec
    runner: object
    fingerprint: str

    @property
    def kind(self):
        return self.spec.output_kind


def load_model(spec: ModelSpec, mock: bool = False) -> ModelHandle:
    """Validate ``spec`` and return a reusable handle.

    With ``mock=True`` (or when the spec has no ``model_path``) the handle
    wraps a :class:`MockRunner` configured from ``spec.mock``.
    """
    if spec.output_kind == LABEL_VECTOR:
        missing = [lab for lab in REQUIRED_PATHOLOGY_LABELS if lab not in spec.labels]
        if missing:
            raise MissingLabelsError(missing)
        if len(set(spec.labels)) != len(spec.labels):
            raise InvalidInputError("pathology labels must be unique")

    if mock or not spec.model_path:
        cfg = dict(DEFAULT_MOCK[spec.output_kind])
        cfg.update(spec.mock or {})
        runner = MockRunner(spec.output_kind, n_outputs=len(spec.labels), **cfg)
        return ModelHandle(spec, runner, runner.fingerprint)

    if not Path(spec.model_path).is_file():
        raise ModelFileNotFoundError(f"model file not found: {spec.model_path}")
    runner = OnnxRunner(spec)
    return ModelHandle(spec, runner, runner.fingerprint)


def _describe(h: ModelHandle) -> str:
    return h.spec.model_path or h.fingerprint


def run_segmentation(h: ModelHandle, img) -> np.ndarray:
    """Per-pixel lung probability map at the input image's size."""
    if h.kind != PER_PIXEL_MAP:
        raise InvalidInputError(f"model {_describe(h)} is not a segmentation model")
    img = as_gray(img)
    try:
        prob = np.asarray(h.runner(img), dtype=np.float64)
    except Exception as exc:
        raise InferenceError(f"segmentation failed for model {_describe(h)}: {exc}") from exc
    if prob.shape != img.shape:
        raise InferenceError(
            f"model {_describe(h)} returned map {prob.shape} for image {img.shape}")
    return np.clip(np.nan_to_num(prob, nan=0.0), 0.0, 1.0)


def run_pathology_features(h: ModelHandle, img, image_id: str = "") -> PathologyFeatures:
    if h.kind != LABEL_VECTOR:
        raise InvalidInputError(f"model {_describe(h)} is not a label-vector model")
    img = as_gray(img)
    try:
        values = np.asarray(h.runner(img), dtype=np.float64).reshape(-1)
    except Exception as exc:
        raise InferenceError(f"feature extraction failed for model {_describe(h)}: {exc}") from exc
    labels = h.spec.labels
    if values.size != len(labels):
        raise InferenceError(
            f"model {_describe(h)} emitted {values.size} values for {len(labels)} labels")
    if not all(math.isfinite(v) for v in values):
        raise InferenceError(f"model {_describe(h)} emitted non-finite scores")
    return PathologyFeatures(image_id, {lab: float(v) for lab, v in zip(labels, values)})
