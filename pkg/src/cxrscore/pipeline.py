"""Pipeline stages behind the CLI subcommands.

Each ``run_*`` function reads inputs named by a :class:`PipelineConfig`,
writes its artifacts under the configured output directory and returns a
manifest dict. Per-image problems are recorded in the manifest instead of
aborting the run.
"""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, imgproc
from .dataset import (
    ImageRecord,
    TriState,
    apply_include_list,
    derive_training_labels,
    parse_metadata,
    read_include_list,
    write_rejects_csv,
)
from .errors import CxrScoreError, InvalidInputError, SchemaError
from .evaluation import build_report, emit_report, load_external_scores, render_figures
from .evaluation import plotting
from .evaluation.report import write_json
from .imageio import load_gray, load_mask, save_gray, save_mask
from .learn import (
    LogisticFitter,
    SeverityModel,
    TreeFitter,
    TreeModel,
    confusion,
    fit_tree,
    leave_two_out_cv,
    train_severity_model,
)
from .runtime import LABEL_VECTOR, PER_PIXEL_MAP, ModelSpec, load_model, run_pathology_features, run_segmentation

PREPROCESSED = "preprocessed"
MASKS = "masks"
FEATURES = "features.csv"
MODEL = "model.json"
TREE = "tree.json"
TRAIN_REPORT = "train_report.json"
SCORES = "scores.csv"
REPORT_DIR = "report"
PREPROCESS_STEPS = ("equalize", "segment", "threshold", "close", "fill-holes",
                    "keep-largest", "mask-and-crop", "clahe")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------- manifests

def model_info(handle) -> dict:
    spec = handle.spec
    spec_blob = json.dumps({
        "output_kind": spec.output_kind, "input_size": list(spec.input_size),
        "normalization": spec.normalization, "labels": list(spec.labels),
        "input_name": spec.input_name, "output_name": spec.output_name,
    }, sort_keys=True)
    return {
        "fingerprint": handle.fingerprint,
        "mock": handle.fingerprint.startswith("mock:"),
        "spec_sha256": hashlib.sha256(spec_blob.encode()).hexdigest(),
    }


def new_manifest(command: str, cfg, models=None) -> dict:
    return {
        "command": command,
        "package_version": __version__,
        "config_sha256": cfg.sha256(),
        "models": models or {},
        "items": [],
        "notes": [],
    }


def finish_manifest(manifest: dict, out_dir: Path, outputs=()) -> dict:
    """Add output hashes, status counts and a run hash, then write the manifest."""
    items = sorted(manifest["items"], key=lambda it: it["id"])
    manifest["items"] = items
    manifest["summary"] = {
        "ok": sum(it["status"] == "ok" for it in items),
        "failed": sum(it["status"] == "failed" for it in items),
    }
    manifest["outputs"] = {str(p): sha256_file(out_dir / p) for p in sorted(outputs)}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    manifest["run_sha256"] = hashlib.sha256(blob.encode()).hexdigest()
    mdir = out_dir / "manifests"
    mdir.mkdir(parents=True, exist_ok=True)
    write_json(manifest, mdir / f"{manifest['command']}.json")
    return manifest


def _ok(image_id, **extra):
    return {"id": image_id, "status": "ok", **extra}


def _failed(image_id, reason, kind="missing-input"):
    return {"id": image_id, "status": "failed", "error": str(reason), "kind": kind}


def _error(image_id, exc):
    return _failed(image_id, exc, type(exc).__name__)


def _map(fn, items, jobs):
    """Run ``fn`` over ``items``; results come back in input order."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------- inputs

def load_records(cfg, schema: str, manifest: dict | None = None) -> list[ImageRecord]:
    key = f"{schema}_csv"
    cfg.require(key)
    records, rejects = parse_metadata(getattr(cfg.paths, key), schema)
    if rejects and manifest is not None:
        out = cfg.output_dir / f"rejects_{schema}.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        write_rejects_csv(rejects, out)
        manifest["notes"].append(f"{len(rejects)} {schema} metadata rows rejected; see {out.name}")
    if cfg.paths.include_list:
        records, dropped = apply_include_list(records, read_include_list(cfg.paths.include_list))
        if dropped and manifest is not None:
            manifest["notes"].append(f"{len(dropped)} {schema} images not in the include list")
    return records


def all_records(cfg, manifest=None) -> list[ImageRecord]:
    """Records of both cohorts; an id listed in both must name the same file."""
    merged = {}
    for schema in ("cohen", "hanno"):
        if getattr(cfg.paths, f"{schema}_csv") is None:
            continue
        for r in load_records(cfg, schema, manifest):
            prev = merged.get(r.image_id)
            if prev is not None and prev.file != r.file:
                raise SchemaError(f"image id {r.image_id!r} names two files: {prev.file}, {r.file}")
            merged.setdefault(r.image_id, r)
    if not merged:
        raise InvalidInputError("no metadata configured: set paths.cohen_csv and/or paths.hanno_csv")
    return [merged[k] for k in sorted(merged)]


def load_handle(spec_path, kind, mock):
    spec = ModelSpec.from_file(spec_path) if spec_path else ModelSpec(kind)
    if spec.output_kind != kind:
        raise InvalidInputError(f"{spec_path}: expected a {kind} model, got {spec.output_kind}")
    return load_model(spec, mock=mock)


def read_features(path) -> tuple[list[str], dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "image_id":
            raise SchemaError(f"{path}: first column must be image_id")
        rows = {}
        for row in reader:
            rows[row[0]] = np.array([float(v) for v in row[1:]], dtype=np.float64)
    return header[1:], rows


def read_scores(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_id", "score"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: scores need image_id and score columns")
        return {row["image_id"]: float(row["score"]) for row in reader}


# ---------------------------------------------------------------- preprocess

def preprocess_image(img, seg_handle, params) -> tuple[np.ndarray, np.ndarray]:
    """Equalize, segment, clean the lung mask, crop to it and apply CLAHE.

    Returns ``(processed image, full-size lung mask)``. Raises
    ``EmptyMaskError`` when no lung pixels survive.
    """
    eq = imgproc.equalize_hist(img)
    prob = run_segmentation(seg_handle, eq)
    mask = imgproc.threshold_mask(prob, params.threshold)
    mask = imgproc.morph_close(mask, params.close_radius)
    mask = imgproc.fill_holes(mask)
    mask = imgproc.keep_largest_components(mask, params.components)
    cropped = imgproc.apply_mask_and_crop(eq, mask, params.margin)
    return imgproc.clahe(cropped, params.clahe), mask


def run_preprocess(cfg, mock=False) -> dict:
    cfg.require("images_dir")
    out = cfg.output_dir
    seg = load_handle(cfg.paths.segmentation_spec, PER_PIXEL_MAP, mock)
    manifest = new_manifest("preprocess", cfg, {"segmentation": model_info(seg)})
    manifest["steps"] = list(PREPROCESS_STEPS)
    records = all_records(cfg, manifest)
    images_dir = Path(cfg.paths.images_dir)

    def work(r):
        src = images_dir / r.file
        try:
            img = load_gray(src)
        except (OSError, ValueError) as exc:
            return _failed(r.image_id, f"unreadable image {r.file}: {exc}", "unreadable"), None
        try:
            processed, mask = preprocess_image(img, seg, cfg.imgproc)
        except CxrScoreError as exc:
            return _error(r.image_id, exc), None
        save_gray(out / PREPROCESSED / f"{r.image_id}.png", processed)
        save_mask(out / MASKS / f"{r.image_id}.png", mask)
        return _ok(r.image_id, source_sha256=sha256_file(src),
                   shape=list(processed.shape)), r.image_id

    results = _map(work, records, cfg.jobs)
    manifest["items"] = [item for item, _ in results]
    outputs = []
    for _, image_id in results:
        if image_id is not None:
            outputs += [f"{PREPROCESSED}/{image_id}.png", f"{MASKS}/{image_id}.png"]
    return finish_manifest(manifest, out, outputs)


# ---------------------------------------------------------------- extract

def run_extract(cfg, mock=False) -> dict:
    out = cfg.output_dir
    path_h = load_handle(cfg.paths.pathology_spec, LABEL_VECTOR, mock)
    manifest = new_manifest("extract", cfg, {"pathology": model_info(path_h)})
    records = all_records(cfg, manifest)
    labels = list(path_h.spec.labels)

    def work(r):
        src = out / PREPROCESSED / f"{r.image_id}.png"
        if not src.is_file():
            return _failed(r.image_id, "no preprocessed image"), None
        try:
            feats = run_pathology_features(path_h, load_gray(src), r.image_id)
        except (CxrScoreError, OSError) as exc:
            return _error(r.image_id, exc), None
        return _ok(r.image_id), feats

    results = _map(work, records, cfg.jobs)
    manifest["items"] = [item for item, _ in results]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / FEATURES, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id"] + labels)
        for _, feats in results:
            if feats is not None:
                writer.writerow([feats.image_id] + [_fmt(feats.values[lab]) for lab in labels])
    return finish_manifest(manifest, out, [FEATURES])


# ---------------------------------------------------------------- train

def training_matrix(cfg, manifest):
    """Features and labels of the labelled training images found in the features CSV."""
    labels, rows = read_features(cfg.output_dir / FEATURES)
    labelled, excluded = derive_training_labels(load_records(cfg, "cohen", manifest))
    used, ids = [], []
    for r, lab in labelled:
        if r.image_id in rows:
            used.append((rows[r.image_id], int(lab)))
            ids.append(r.image_id)
            manifest["items"].append(_ok(r.image_id, label=int(lab)))
        else:
            manifest["items"].append(_failed(r.image_id, "no features for training image"))
    if not used:
        raise InvalidInputError("no labelled training image has features")
    X = np.vstack([u[0] for u in used])
    y = np.array([u[1] for u in used], dtype=int)
    return labels, ids, X, y, excluded


def _cv_block(X, y, fitter, jobs):
    try:
        return {"status": "ok", **leave_two_out_cv(X, y, fitter, jobs=jobs).to_dict()}
    except InvalidInputError as exc:
        return {"status": "skipped", "reason": str(exc)}


def run_train(cfg, mock=False) -> dict:
    out = cfg.output_dir
    manifest = new_manifest("train", cfg)
    labels, ids, X, y, excluded = training_matrix(cfg, manifest)
    counts = {"not_icu": int(np.sum(y == 0)), "future_icu": int(np.sum(y == 1))}
    if 0 in counts.values():
        raise InvalidInputError(
            f"training data holds a single class ({counts}); both 'not icu' and "
            "'future icu' images are needed")

    provenance = {"config_sha256": manifest["config_sha256"],
                  "features_sha256": sha256_file(out / FEATURES)}
    lp = cfg.learn
    model = train_severity_model(X, y, labels, ridge=lp.ridge, manifest=provenance)
    model.save(out / MODEL)
    if not model.manifest["converged"]:
        manifest["notes"].append("logistic fit did not converge; see model.json")

    train_cm = confusion(model.predict(X, lp.threshold), y)
    report = {
        "n_samples": int(y.size),
        "class_counts": counts,
        "excluded": excluded,
        "logistic": {
            "train_accuracy": train_cm.accuracy,
            "confusion": train_cm.to_dict(),
            "leave_two_out": _cv_block(X, y, LogisticFitter(lp.ridge, lp.threshold), cfg.jobs),
        },
        **provenance,
    }
    outputs = [MODEL, TRAIN_REPORT]
    figure_cm = train_cm
    try:
        tree = fit_tree(X, y, lp.max_depth, lp.min_leaf)
    except InvalidInputError as exc:
        report["tree"] = {"status": "skipped", "reason": str(exc)}
    else:
        tree_cm = confusion(tree.predict(X), y)
        figure_cm = tree_cm
        report["tree"] = {
            "status": "ok",
            "train_accuracy": tree_cm.accuracy,
            "confusion": tree_cm.to_dict(),
            "leave_two_out": _cv_block(X, y, TreeFitter(lp.max_depth, lp.min_leaf), cfg.jobs),
            "summary": tree.summary(labels),
        }
        write_json(dict(tree.to_dict(labels), feature_names=labels, **provenance), out / TREE)
        outputs.append(TREE)
    write_json(report, out / TRAIN_REPORT)
    with plotting.style():
        plotting.save_svg(plotting.confusion_figure(figure_cm.to_dict(), "training set"),
                          out / "confusion_train.svg")
    outputs.append("confusion_train.svg")
    return finish_manifest(manifest, out, outputs)


# ---------------------------------------------------------------- score / evaluate

def run_score(cfg, mock=False) -> dict:
    out = cfg.output_dir
    manifest = new_manifest("score", cfg)
    model = SeverityModel.load(out / MODEL)
    labels, rows = read_features(out / FEATURES)
    if tuple(labels) != model.feature_names:
        raise SchemaError("features.csv columns do not match the trained model")
    manifest["models"]["severity"] = {"sha256": sha256_file(out / MODEL)}
    records = load_records(cfg, "hanno", manifest)
    scored = {}
    for r in records:
        if r.image_id not in rows:
            manifest["items"].append(_failed(r.image_id, "no features for validation image"))
            continue
        scored[r.image_id] = float(model.score_matrix(rows[r.image_id][None, :])[0])
        manifest["items"].append(_ok(r.image_id))
    with open(out / SCORES, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "score"])
        for image_id in sorted(scored):
            writer.writerow([image_id, _fmt(scored[image_id])])
    return finish_manifest(manifest, out, [SCORES])


def _hanno_separability(cfg, records):
    """Apply the training tree to validation images, labelled by ICU status at capture."""
    tree_path = cfg.output_dir / TREE
    if not tree_path.is_file():
        return {"status": "skipped", "reason": "no tree was trained"}
    with open(tree_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    tree = TreeModel.from_dict(doc)
    _, rows = read_features(cfg.output_dir / FEATURES)
    X, y = [], []
    for r in records:
        if r.image_id in rows and r.in_icu_at_capture is not TriState.UNKNOWN:
            X.append(rows[r.image_id])
            y.append(int(r.in_icu_at_capture is TriState.YES))
    if not y:
        return {"status": "skipped", "reason": "no validation image with features and known ICU status"}
    cm = confusion(tree.predict(np.vstack(X)), np.array(y))
    return {"status": "ok", "label": "in_icu_at_capture", "accuracy": cm.accuracy,
            "confusion": cm.to_dict()}


def run_evaluate(cfg, mock=False) -> dict:
    out = cfg.output_dir
    manifest = new_manifest("evaluate", cfg)
    scores = read_scores(out / SCORES)
    records = load_records(cfg, "hanno", manifest)
    externals = []
    for ext in cfg.external_scores:
        externals.append(load_external_scores(ext.path, ext.method, ext.range))
        manifest["models"][ext.method] = {"sha256": sha256_file(ext.path)}
    if (out / MODEL).is_file():
        manifest["models"]["severity"] = {"sha256": sha256_file(out / MODEL)}
    extra = {
        "provenance": {"config_sha256": manifest["config_sha256"],
                       "scores_sha256": sha256_file(out / SCORES),
                       "models": manifest["models"]},
        "validation_separability": _hanno_separability(cfg, records),
    }
    report = build_report(scores, records, cfg.grouping, externals, cfg.predicates, extra=extra)
    for r in records:
        if r.image_id not in scores:
            manifest["items"].append(_failed(r.image_id, "no score for validation image"))
        elif r.image_id in report["unassigned_images"]:
            manifest["items"].append({"id": r.image_id, "status": "unassigned",
                                      "reason": report["unassigned_images"][r.image_id]})
        else:
            manifest["items"].append(_ok(r.image_id))
    for name, block in report["methods"].items():
        if block["empty_groups"]:
            manifest["notes"].append(f"{name}: empty groups {', '.join(block['empty_groups'])}")
    files = emit_report(report, out / REPORT_DIR)
    return finish_manifest(manifest, out, [f"{REPORT_DIR}/{f}" for f in files])


def run_report(cfg, mock=False) -> dict:
    """Re-render the figures of an existing report bundle."""
    out = cfg.output_dir
    manifest = new_manifest("report", cfg)
    path = out / REPORT_DIR / "report.json"
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    files = render_figures(report, out / REPORT_DIR)
    return finish_manifest(manifest, out, [f"{REPORT_DIR}/{f}" for f in files])


# ---------------------------------------------------------------- dice

def mask_files(directory) -> dict:
    return {p.stem: p for p in sorted(Path(directory).iterdir())
            if p.suffix.lower() in (".png", ".pgm")}


def run_dice(pred_dir, gold_dir, out_csv) -> dict:
    """Per-image Dice between masks paired by file stem, plus their mean."""
    pred, gold = mask_files(pred_dir), mask_files(gold_dir)
    paired = sorted(set(pred) & set(gold))
    unpaired = sorted(set(pred) ^ set(gold))
    rows, failures = [], []
    for image_id in paired:
        try:
            a, b = load_mask(pred[image_id]), load_mask(gold[image_id])
            rows.append((image_id, imgproc.dice(a, b)))
        except (CxrScoreError, OSError) as exc:
            failures.append({"id": image_id, "error": str(exc)})
    mean = float(np.mean([d for _, d in rows])) if rows else None
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "dice"])
        for image_id, d in rows:
            writer.writerow([image_id, _fmt(d)])
        writer.writerow(["mean", "" if mean is None else _fmt(mean)])
    return {"n_paired": len(rows), "mean": mean, "unpaired": unpaired, "failures": failures}
