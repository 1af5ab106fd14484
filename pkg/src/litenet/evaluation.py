"""Prediction metrics, autocorrelation and the inference latency harness."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateDataError, SizeError
from .market_data import BarSeries, compute_features
from .net import FusedModel, fused_forward, model_stats

# Reported figures of the reference system, kept as metadata only.
REFERENCE_EXECUTION_MS = 35.0
REFERENCE_LATENCY_MS = 10.0


def _pair(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1 or len(y) == 0:
        raise SizeError("y and yhat must be nonempty vectors of equal length")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


def r2_score(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if len(y) < 2:
        raise SizeError("r2 needs at least 2 samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateDataError("target has zero variance")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    r2: float
    n: int
    split: str = "test"

    def to_text(self) -> str:
        return f"split={self.split} n={self.n} rmse={self.rmse:.9g} r2={self.r2:.6f}\n"


def evaluate(y, yhat, split: str = "test") -> MetricsReport:
    return MetricsReport(rmse(y, yhat), r2_score(y, yhat), len(y), split)


@dataclass(frozen=True, eq=False)
class AcfReport:
    lags: np.ndarray
    values: np.ndarray
    n: int
    series: str = ""

    def to_text(self) -> str:
        lines = [f"# acf series={self.series} n={self.n}", "lag acf"]
        lines += [f"{int(l)} {v:.6f}" for l, v in zip(self.lags, self.values)]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {"series": self.series, "n": self.n, "lags": self.lags.tolist(), "acf": self.values.tolist()},
            indent=1,
        )


def acf(series, max_lag: int, name: str = "") -> AcfReport:
    """Biased sample autocorrelation for lags 0..max_lag."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if max_lag < 0 or n < max_lag + 2:
        raise SizeError(f"series of length {n} too short for max_lag={max_lag}")
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom == 0:
        raise DegenerateDataError("constant series has no autocorrelation")
    vals = np.array([float(dev[: n - tau] @ dev[tau:]) / denom for tau in range(max_lag + 1)])
    vals[0] = 1.0
    return AcfReport(np.arange(max_lag + 1), vals, n, name)


def percentile_nearest_rank(samples, q: float) -> int:
    s = np.sort(np.asarray(samples))
    rank = max(1, math.ceil(q / 100.0 * len(s)))
    return int(s[rank - 1])


@dataclass(frozen=True, eq=False)
class LatencyReport:
    samples_ns: np.ndarray
    reps: int
    warmup: int
    sparsity: float
    checksum: str
    kind: str = "latency"  # "latency" = forward pass only, "execution" = features + forward
    reference_ms: dict = field(
        default_factory=lambda: {"execution": REFERENCE_EXECUTION_MS, "latency": REFERENCE_LATENCY_MS}
    )

    @property
    def mean_ns(self) -> float:
        return float(np.mean(self.samples_ns))

    @property
    def p50(self) -> int:
        return percentile_nearest_rank(self.samples_ns, 50)

    @property
    def p95(self) -> int:
        return percentile_nearest_rank(self.samples_ns, 95)

    @property
    def p99(self) -> int:
        return percentile_nearest_rank(self.samples_ns, 99)

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "reps": self.reps,
            "warmup": self.warmup,
            "mean_ms": self.mean_ns / 1e6,
            "p50_ms": self.p50 / 1e6,
            "p95_ms": self.p95 / 1e6,
            "p99_ms": self.p99 / 1e6,
            "sparsity": self.sparsity,
            "checksum": self.checksum,
            "reference_ms": self.reference_ms,
            "boundary": "execution = feature extraction + forward; latency = forward only",
        }

    def to_text(self) -> str:
        s = self.summary()
        return (
            f"# {s['boundary']}\n"
            f"kind={s['kind']} reps={s['reps']} warmup={s['warmup']} sparsity={s['sparsity']:.4f}\n"
            f"mean_ms={s['mean_ms']:.6f} p50_ms={s['p50_ms']:.6f} "
            f"p95_ms={s['p95_ms']:.6f} p99_ms={s['p99_ms']:.6f}\n"
            f"checksum={s['checksum']}\n"
            f"reference_ms execution={REFERENCE_EXECUTION_MS:g} latency={REFERENCE_LATENCY_MS:g} (not comparable)\n"
        )

    def to_json(self) -> str:
        d = self.summary()
        d["samples_ns"] = self.samples_ns.tolist()
        return json.dumps(d, indent=1)


def _checksum(values: list[float]) -> str:
    return hashlib.sha256(np.asarray(values, dtype=np.float64).tobytes()).hexdigest()[:16]


def latency_bench(model: FusedModel, windows: Sequence[np.ndarray], reps: int, warmup: int = 100) -> LatencyReport:
    """Time ``reps`` single-window forward passes, cycling through ``windows``.

    Windows must already be restricted to the model's input columns.
    """
    if reps < 1:
        raise SizeError("reps must be >= 1")
    if len(windows) == 0:
        raise SizeError("no windows to benchmark")
    clock = time.perf_counter_ns
    nwin = len(windows)
    for k in range(warmup):
        fused_forward(windows[k % nwin], model)
    samples = np.empty(reps, dtype=np.int64)
    outputs = []
    for k in range(reps):
        x = windows[k % nwin]
        t0 = clock()
        yhat = fused_forward(x, model)
        samples[k] = clock() - t0
        outputs.append(yhat)
    return LatencyReport(samples, reps, warmup, model_stats(model).sparsity, _checksum(outputs))


def pipeline_bench(
    model: FusedModel,
    bars: BarSeries,
    columns: Sequence[str],
    vol_window: int,
    end_bars: Sequence[int],
    reps: int,
    warmup: int = 100,
    noise: np.ndarray | None = None,
) -> LatencyReport:
    """Time feature extraction for one window plus the forward pass.

    ``columns`` names the feature-universe columns; only the model's input
    columns are computed. ``end_bars`` lists the bar index each input window
    ends at.
    """
    if reps < 1:
        raise SizeError("reps must be >= 1")
    if len(end_bars) == 0:
        raise SizeError("no windows to benchmark")
    names = [columns[c] for c in model.input_columns]
    cols = list(model.input_columns)
    if model.feature_mean is not None:
        mean, std = model.feature_mean[cols], model.feature_std[cols]
    else:
        mean, std = 0.0, 1.0
    w = model.window

    def step(end):
        x = compute_features(bars, names, vol_window, noise, end - w + 1, end + 1)
        return fused_forward((x - mean) / std, model)

    clock = time.perf_counter_ns
    n_end = len(end_bars)
    for k in range(warmup):
        step(end_bars[k % n_end])
    samples = np.empty(reps, dtype=np.int64)
    outputs = []
    for k in range(reps):
        end = end_bars[k % n_end]
        t0 = clock()
        yhat = step(end)
        samples[k] = clock() - t0
        outputs.append(yhat)
    return LatencyReport(
        samples, reps, warmup, model_stats(model).sparsity, _checksum(outputs), kind="execution"
    )


@dataclass(frozen=True)
class SweepRow:
    value: float
    rmse: float
    r2: float
    latency_ms: float


def sweep_experiment(bars: BarSeries, axis: str, values: Sequence[float], cfg, bench_reps: int = 200) -> list[SweepRow]:
    """Re-run the full pipeline once per axis value ("window" or "threshold")."""
    from .pipeline import run_pipeline  # pipeline imports this module

    if len(values) == 0:
        raise SizeError("sweep axis is empty")
    if axis not in ("window", "threshold"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    rows = []
    for v in values:
        run_cfg = cfg.with_window(int(v)) if axis == "window" else cfg.with_threshold(float(v))
        res = run_pipeline(run_cfg, bars)
        windows = res.test_inputs()[: max(1, min(len(res.test), 256))]
        lat = latency_bench(res.model, windows, bench_reps, warmup=min(50, bench_reps))
        rows.append(SweepRow(v, res.metrics.rmse, res.metrics.r2, lat.mean_ns / 1e6))
    return rows


def format_sweep(axis: str, rows: Sequence[SweepRow]) -> str:
    lines = [f"{axis:>10} {'rmse':>14} {'r2':>10} {'latency_ms':>11}"]
    for r in rows:
        lines.append(f"{r.value:>10g} {r.rmse:>14.9g} {r.r2:>10.5f} {r.latency_ms:>11.5f}")
    return "\n".join(lines) + "\n"


def sweep_json(axis: str, rows: Sequence[SweepRow]) -> str:
    return json.dumps({"axis": axis, "rows": [asdict(r) for r in rows]}, indent=1)
