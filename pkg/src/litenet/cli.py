"""Command-line driver.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 degenerate data
or model.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import artifact
from .config import read_config
from .errors import LitenetError
from .evaluation import acf, format_sweep, latency_bench, pipeline_bench, sweep_experiment, sweep_json
from .market_data import bars_to_csv, generate_synthetic, make_windows, noise_columns
from .mutual_info import format_selection
from .pipeline import feature_matrix, initial_selection, load_bars, model_config, predict_bars, prepare, run_pipeline


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)


def cmd_synth(args) -> str:
    cfg = read_config(args.config)
    bars = generate_synthetic(cfg.synth_config())
    text = bars_to_csv(bars)
    if args.out:
        _write(args.out, text)
        return f"wrote {len(bars)} bars to {args.out}\n"
    return text


def cmd_select(args) -> str:
    cfg = read_config(args.config)
    prep = prepare(cfg, load_bars(cfg, args.data))
    text = format_selection(initial_selection(cfg, prep))
    _write(args.out, text)
    return text


def cmd_train(args) -> str:
    cfg = read_config(args.config)
    res = run_pipeline(cfg, load_bars(cfg, args.data))
    artifact.save_model(res.model, args.out)
    metrics = res.metrics.to_text()
    _write(args.metrics_out, metrics)
    cols = ",".join(res.fm.columns[c] for c in res.model.input_columns)
    return metrics + f"model written to {args.out} (inputs: {cols})\n"


def cmd_predict(args) -> str | None:
    model = artifact.load_model(args.model)
    cfg = model_config(model)
    preds = predict_bars(model, load_bars(cfg, args.data))
    lines = "".join("%.17g\n" % p for p in preds)
    if args.out:
        _write(args.out, lines)
        return f"wrote {len(preds)} predictions to {args.out}\n"
    return lines


def cmd_bench(args) -> str:
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    model = artifact.load_model(args.model)
    cfg = model_config(model)
    bars = load_bars(cfg, args.data)
    fm = feature_matrix(cfg, bars)
    if args.mode == "latency":
        Xs = fm.values if model.feature_mean is None else (fm.values - model.feature_mean) / model.feature_std
        ws = make_windows(Xs, model.window, fm.y)
        cols = list(model.input_columns)
        windows = [ws[k][0][:, cols] for k in range(min(len(ws), 1024))]
        report = latency_bench(model, windows, args.reps, args.warmup)
    else:
        noise = noise_columns(len(bars), cfg["data.n_noise_features"], cfg.seed)
        first = fm.offset + model.window - 1
        ends = list(range(first, first + min(1024, fm.n - model.window + 1)))
        report = pipeline_bench(
            model, bars, fm.columns, cfg["features.vol_window"], ends, args.reps, args.warmup, noise
        )
    _write(args.out, report.to_json())
    return report.to_text()


def cmd_acf(args) -> str:
    cfg = read_config(args.config)
    bars = load_bars(cfg, args.data)
    close = np.asarray(bars.close)
    series = {"close": close, "returns": close[1:] / close[:-1] - 1.0}
    names = ["close", "returns"] if args.series == "both" else [args.series]
    reports = [acf(series[n], args.max_lag, n) for n in names]
    if args.out:
        _write(args.out, "[" + ",\n".join(r.to_json() for r in reports) + "]\n")
    return "".join(r.to_text() for r in reports)


def cmd_sweep(args) -> str:
    cfg = read_config(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise UsageError("--values is empty")
    rows = sweep_experiment(load_bars(cfg, args.data), args.axis, values, cfg, args.bench_reps)
    _write(args.out, sweep_json(args.axis, rows))
    return format_sweep(args.axis, rows)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="litenet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "write a synthetic OHLCV CSV")
    p.add_argument("--config")
    p.add_argument("--out")

    p = add("select", cmd_select, "print the feature selection table")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")

    p = add("train", cmd_train, "train a model and report held-out metrics")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics-out")

    p = add("predict", cmd_predict, "stream one prediction per window")
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--out")

    p = add("bench", cmd_bench, "time single-window inference")
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--mode", choices=("latency", "execution"), default="latency")
    p.add_argument("--out")

    p = add("acf", cmd_acf, "autocorrelation of close prices and returns")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--max-lag", type=int, default=20)
    p.add_argument("--series", choices=("close", "returns", "both"), default="both")
    p.add_argument("--out")

    p = add("sweep", cmd_sweep, "re-run the pipeline across window sizes or MI thresholds")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--axis", choices=("window", "threshold"), required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--bench-reps", type=int, default=200)
    p.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        out = args.func(args)
    except UsageError as exc:
        print(f"litenet {args.command}: usage error: {exc}", file=sys.stderr)
        return 1
    except LitenetError as exc:
        print(f"litenet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"litenet {args.command}: {exc}", file=sys.stderr)
        return 2
    if out:
        sys.stdout.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
