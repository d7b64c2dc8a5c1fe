"""Command-line interface: ``cxrscore <command> [options]``.

Exit status is 0 when every item succeeded, 1 when some images failed and
2 when the command could not run at all.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import PipelineConfig, load_config
from .dataset import GROUPING_MODES
from .errors import CxrScoreError

log = logging.getLogger("cxrscore")

COMMANDS = {
    "preprocess": (pipeline.run_preprocess, "equalize, segment, crop and CLAHE every image"),
    "extract": (pipeline.run_extract, "pathology features of the preprocessed images"),
    "train": (pipeline.run_train, "fit the severity model and the separability tree"),
    "score": (pipeline.run_score, "score the validation images"),
    "evaluate": (pipeline.run_evaluate, "group scores by stage and write the report bundle"),
    "report": (pipeline.run_report, "re-render figures of an existing report"),
}


def _add_globals(parser, suppress=False):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="pipeline config (YAML)")
    parser.add_argument("--mock-models", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="use deterministic stand-ins instead of ONNX models")
    parser.add_argument("--jobs", type=int, default=default, metavar="N",
                        help="worker threads for per-image stages")
    parser.add_argument("--grouping", choices=GROUPING_MODES, default=default,
                        help="stage-group assignment mode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cxrscore", description="Chest X-ray severity scoring pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _add_globals(parser)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        _add_globals(sub.add_parser(name, help=help_text), suppress=True)
    dice = sub.add_parser("dice", help="Dice overlap between predicted and reference masks")
    dice.add_argument("pred", type=Path, help="directory of predicted masks")
    dice.add_argument("gold", type=Path, help="directory of reference masks")
    dice.add_argument("-o", "--output", type=Path, default=Path("dice.csv"), help="CSV to write")
    return parser


def _config(args) -> PipelineConfig:
    if args.config is None:
        raise CxrScoreError("--config is required for this command")
    cfg = load_config(args.config).with_overrides(jobs=args.jobs, grouping=args.grouping)
    cfg.validate_paths()
    return cfg


def _report_manifest(manifest) -> int:
    summary = manifest["summary"]
    for item in manifest["items"]:
        if item["status"] == "failed":
            log.warning("%s: %s", item["id"], item["error"])
    for note in manifest["notes"]:
        log.info("%s", note)
    print(f"{manifest['command']}: {summary['ok']} ok, {summary['failed']} failed")
    return 1 if summary["failed"] else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "dice":
            result = pipeline.run_dice(args.pred, args.gold, args.output)
            for image_id in result["unpaired"]:
                log.warning("unpaired mask %s", image_id)
            for failure in result["failures"]:
                log.warning("%s: %s", failure["id"], failure["error"])
            mean = "n/a" if result["mean"] is None else f"{result['mean']:.4f}"
            print(f"dice: {result['n_paired']} pairs, mean {mean}, {len(result['unpaired'])} unpaired")
            return 1 if result["unpaired"] or result["failures"] else 0
        cfg = _config(args)
        run, _ = COMMANDS[args.command]
        return _report_manifest(run(cfg, mock=args.mock_models))
    except (CxrScoreError, OSError, ValueError) as exc:
        print(f"cxrscore {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
