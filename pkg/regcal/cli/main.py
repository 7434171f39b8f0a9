"""
RegCal - Command Line
fit / apply / eval / match / synth subcommands
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from ..config import get_settings
from ..core import CalibrationDataset, Distribution, GaussianPrediction, location
from ..detection import (
    MatchConfig,
    half_split,
    match,
    read_dataset,
    read_detections,
    read_ground_truths,
    read_inputs,
    read_outputs,
    write_dataset,
    write_outputs,
)
from ..errors import DataError, RegCalError, TrainingDivergedError
from ..gp import SVGPConfig
from ..logging_utils import configure_logging
from ..methods import METHODS, apply_calibrator, fit_calibrator
from ..metrics import EvalConfig, QuantileGrid, curves, evaluate, nll, parse_metric_list
from ..metrics.binning import DEFAULT_BINS, DEFAULT_LEVELS
from ..synth import GENERATORS, SynthConfig, generate
from .model_file import ModelFile, load_model, save_model

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 2


# ============================================================================
# Helpers
# ============================================================================

def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])


def _validation_message(exc: ValidationError) -> str:
    first = exc.errors()[0]
    where = ".".join(str(part) for part in first["loc"])
    return f"{where}: {first['msg']}" if where else first["msg"]


def _training_config(args: argparse.Namespace) -> SVGPConfig:
    return SVGPConfig(
        inducing=args.inducing,
        epochs=args.epochs,
        lr=args.lr,
        mc_samples=args.mc_samples,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def _eval_inputs(path: str) -> Tuple[CalibrationDataset, Distribution]:
    """Ground truths and the distributions to score, from an outputs or dataset file."""
    dist, ground_truth = read_outputs(path)
    if ground_truth is None:
        raise DataError(f"{path} carries no ground truths ('gt') to evaluate against")
    if isinstance(dist, GaussianPrediction):
        return CalibrationDataset(prediction=dist, ground_truth=ground_truth), dist
    # metrics read only the ground truths when predictions are passed explicitly
    holder = GaussianPrediction(mean=location(dist), var=np.ones((dist.n, dist.k)))
    return CalibrationDataset(prediction=holder, ground_truth=ground_truth), dist


# ============================================================================
# Commands
# ============================================================================

def cmd_fit(args: argparse.Namespace) -> int:
    """Fit a calibrator on a matched dataset and write the model file."""
    config = _training_config(args)
    dataset = read_dataset(args.input)
    logger.info("Fitting %s on %d samples (K=%d)", args.method, dataset.n, dataset.k)
    try:
        calibrator = fit_calibrator(args.method, dataset, config)
    except TrainingDivergedError as exc:
        logger.error("Training diverged at epoch %s; no model written", exc.epoch)
        raise

    save_model(args.output, ModelFile.from_calibrator(args.method, calibrator, config))
    calibrated = apply_calibrator(args.method, calibrator, dataset.prediction, seed=config.seed)
    print(f"train NLL: {nll(dataset, calibrated):.6f}")
    return EXIT_OK


def cmd_apply(args: argparse.Namespace) -> int:
    """Recalibrate every line of an input file with a stored model."""
    model = load_model(args.model)
    calibrator = model.calibrator()
    prediction, ground_truth, groups = read_inputs(args.input)
    if prediction.k != calibrator.k:
        raise DataError(f"model was fitted for K={calibrator.k}, input has K={prediction.k}")

    calibrated = apply_calibrator(
        model.method, calibrator, prediction,
        mc_samples=args.mc_samples,
        seed=model.seed,
        grid_size=args.grid_size,
    )
    write_outputs(args.output, calibrated, ground_truth, groups)
    logger.info("Wrote %d calibrated %s outputs to %s", calibrated.n, model.method, args.output)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Score calibrated outputs (or raw predictions) and write the JSON report."""
    metrics = parse_metric_list(args.metrics) if args.metrics else None
    QuantileGrid.parse(args.levels)
    config = EvalConfig(bins=args.bins, levels=args.levels,
                        **({"metrics": metrics} if metrics is not None else {}))
    dataset, predictions = _eval_inputs(args.input)

    report = {
        "config": config.model_dump(),
        "input": Path(args.input).name,
        "metrics": evaluate(dataset, predictions, config),
    }
    if not args.report:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        _write_json(Path(args.report), report)
        logger.info("Wrote report to %s", args.report)
        summary = report["metrics"]
        for name in ("nll", "pinball", "qce", "uce", "ence"):
            if f"{name}/mean" in summary:
                print(f"{name:8s} {summary[f'{name}/mean']:.6f}")

    if args.curves_dir:
        out = Path(args.curves_dir)
        curve, maps = curves(dataset, predictions, config)
        header = ["tau"] + [f"coverage_{d}" for d in range(dataset.k)]
        rows = [[tau] + curve.coverage[t].tolist() for t, tau in enumerate(curve.levels.tolist())]
        _write_csv(out / "reliability.csv", header, rows)
        for qmap in maps:
            _write_csv(out / f"qce_map_{qmap.label}.csv",
                       ["bin_lower", "bin_upper", "n_samples", "qce"], qmap.rows())
        logger.info("Wrote reliability curve and %d QCE maps to %s", len(maps), out)

    return EXIT_OK


def cmd_match(args: argparse.Namespace) -> int:
    """Pair detections with ground truths and write one or two dataset files."""
    config = MatchConfig(
        iou_threshold=args.iou,
        category_strict=not args.category_agnostic,
        split="half" if args.split_half else "none",
    )
    if config.split == "half" and not (args.train and args.eval):
        raise DataError("--split-half needs --train and --eval output paths")
    if config.split == "none" and not args.output:
        raise DataError("--output is required without --split-half")

    detections = read_detections(args.detections, args.box_format)
    ground_truths = read_ground_truths(args.ground_truth, args.box_format)
    dataset, report = match(detections, ground_truths, config)
    if dataset.n == 0:
        raise DataError("no detection matched a ground truth")

    if config.split == "half":
        train, held_out = half_split(dataset, seed=args.seed)
        write_dataset(args.train, train)
        write_dataset(args.eval, held_out)
        logger.info("Split %d pairs into %d train / %d eval", dataset.n, train.n, held_out.n)
    else:
        write_dataset(args.output, dataset)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a seeded synthetic dataset."""
    config = SynthConfig(kind=args.kind, n=args.n, seed=args.seed,
                         miscal=args.miscal, rho=args.rho, k=args.k)
    write_dataset(args.output, generate(config))
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="regcal",
        description="Post-hoc recalibration of probabilistic regression outputs",
    )
    parser.add_argument("--log-level", default=None, help="overrides RECAL_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable[[argparse.Namespace], int], help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    training = SVGPConfig()
    p = command("fit", cmd_fit, "fit a calibrator on a matched dataset")
    p.add_argument("--method", required=True, choices=sorted(METHODS))
    p.add_argument("--input", required=True, help="training dataset (JSON lines)")
    p.add_argument("--output", required=True, help="model file to write")
    p.add_argument("--inducing", type=int, default=training.inducing)
    p.add_argument("--epochs", type=int, default=training.epochs)
    p.add_argument("--lr", type=float, default=training.lr)
    p.add_argument("--mc-samples", type=int, default=training.mc_samples)
    p.add_argument("--batch-size", type=int, default=training.batch_size)
    p.add_argument("--seed", type=int, default=settings.seed)

    p = command("apply", cmd_apply, "recalibrate predictions with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mc-samples", type=int, default=None,
                   help="posterior draws (defaults to the training value)")
    p.add_argument("--grid-size", type=int, default=settings.grid_size)

    p = command("eval", cmd_eval, "compute calibration metrics")
    p.add_argument("--input", required=True, help="calibrated outputs or dataset with ground truths")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--levels", default=DEFAULT_LEVELS, help="start:stop:step or a comma list")
    p.add_argument("--metrics", default=None, help="comma separated subset of metrics")
    p.add_argument("--report", default=None, help="JSON report path (stdout when omitted)")
    p.add_argument("--curves-dir", default=None, help="directory for reliability/QCE CSVs")

    p = command("match", cmd_match, "pair detections with ground-truth boxes")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--iou", type=float, default=MatchConfig().iou_threshold)
    p.add_argument("--box-format", choices=["center", "corner"], default="center")
    p.add_argument("--category-agnostic", action="store_true")
    p.add_argument("--split-half", action="store_true")
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--output", default=None)
    p.add_argument("--train", default=None)
    p.add_argument("--eval", default=None)

    p = command("synth", cmd_synth, "generate a synthetic dataset")
    p.add_argument("--kind", required=True,
                   choices=sorted(set(GENERATORS) | {k.replace("_", "-") for k in GENERATORS}))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--miscal", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--output", required=True)
    return parser


# ============================================================================
# Entry Point
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {_validation_message(exc)}", file=sys.stderr)
        return EXIT_DATA
    except RegCalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
