"""Command line interface: run, self-check, metrics.

Exit codes: 0 success, 2 input error (files, config, snapshots),
3 numerical degeneracy (corrupted state, degenerate variances, or a
failed self-check).
"""

from __future__ import annotations

import argparse
import csv
import sys
from datetime import datetime
from pathlib import Path

from . import harness
from .forecaster import ColdStart, DegenerateVariances, QOutOfRange
from .metrics import EmptyInput, evaluate_forecasts
from .model_types import ForecastPoint
from .oracles import self_check
from .recursive_learner import DegenerateUpdate, NonPositiveSigma, SingularGram

_INPUT_ERRORS = (
    harness.ParseError,
    harness.NonMonotoneTimestamps,
    harness.UnitMissing,
    harness.EmptySpan,
    harness.VersionMismatch,
    harness.ShapeMismatch,
    harness.CorruptSnapshot,
    EmptyInput,
    FileNotFoundError,
    ValueError,
)

_NUMERIC_ERRORS = (
    DegenerateUpdate,
    DegenerateVariances,
    SingularGram,
    NonPositiveSigma,
    ColdStart,
    QOutOfRange,
)


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    records, gaps = harness.ingest_csv(args.data, config)
    frozen_after = datetime.fromisoformat(args.frozen_after) if args.frozen_after else None
    output_dir = Path(args.output_dir) if args.output_dir else config.output_dir
    result = harness.run_online_evaluation(
        records,
        config,
        frozen_after=frozen_after,
        resume=args.resume,
        snapshot_out=args.snapshot_out,
        output_dir=output_dir,
        gaps=gaps,
    )
    if result.report is not None:
        for line in result.report.lines():
            print(line)
    for key, value in result.notes.items():
        print(f"{key} = {value}")
    if output_dir is not None:
        print(f"outputs written to {output_dir}")
    return 0


def _cmd_self_check(args) -> int:
    return 0 if self_check(seed=args.seed) else 3


def _read_forecasts(path: Path) -> dict:
    out = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["timestamp", "horizon", "mean", "std"]:
            raise harness.ParseError(f"{path}:1: expected forecasts.csv header timestamp,horizon,mean,std")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts = datetime.fromisoformat(row[0])
                out[ts] = ForecastPoint(mean=float(row[2]), std=float(row[3]), t=lineno)
            except (ValueError, IndexError) as exc:
                raise harness.ParseError(f"{path}:{lineno}: {exc}") from exc
    return out


def _cmd_metrics(args) -> int:
    forecasts = _read_forecasts(Path(args.forecasts))
    config = harness.RunConfig(load_unit="MW")
    records, _ = harness.ingest_csv(args.actuals, config)
    samples = [
        (rec.load, forecasts[rec.timestamp])
        for rec in records
        if rec.load is not None and rec.timestamp in forecasts
    ]
    if not samples:
        raise harness.EmptySpan("no overlapping (forecast, actual) timestamps")
    report = evaluate_forecasts(samples)
    for line in report.lines():
        print(line)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="aplf", description="Online probabilistic load forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the rolling online learn/predict evaluation")
    run_p.add_argument("--data", required=True, help="input CSV (timestamp,load[,temperature])")
    run_p.add_argument("--config", required=True, help="flat key = value config file")
    run_p.add_argument("--frozen-after", help="stop learning at this ISO timestamp (ablation)")
    run_p.add_argument("--snapshot-out", help="write a learner snapshot at the end of the run")
    run_p.add_argument("--resume", help="resume from a learner snapshot")
    run_p.add_argument("--output-dir", help="directory for forecasts.csv, report.txt, calibration.csv")
    run_p.set_defaults(func=_cmd_run)

    check_p = sub.add_parser("self-check", help="run the oracle agreement suite")
    check_p.add_argument("--seed", type=int, default=0)
    check_p.set_defaults(func=_cmd_self_check)

    metrics_p = sub.add_parser("metrics", help="evaluate a forecasts CSV against actuals")
    metrics_p.add_argument("--forecasts", required=True)
    metrics_p.add_argument("--actuals", required=True)
    metrics_p.set_defaults(func=_cmd_metrics)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
