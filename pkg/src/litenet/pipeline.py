"""End-to-end run: features -> selection -> training -> held-out evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import Standardizer
from .config import PipelineConfig, load_config, serialize_config
from .errors import SizeError
from .evaluation import MetricsReport, evaluate
from .market_data import (
    BarSeries,
    FeatureMatrix,
    WindowSet,
    build_feature_matrix,
    generate_synthetic,
    make_windows,
    parse_bar_csv,
)
from .mutual_info import SelectionReport, dynamic_reselect, run_selection
from .net import FusedModel, TrainLog, predict_windows, train


def load_bars(cfg: PipelineConfig, csv_path: str | Path | None = None) -> BarSeries:
    path = csv_path or (cfg["data.csv_path"] if cfg["data.source"] == "csv" else None)
    if path:
        with open(path, newline="") as fh:
            return parse_bar_csv(fh, symbol=Path(path).stem)
    return generate_synthetic(cfg.synth_config())


def feature_matrix(cfg: PipelineConfig, bars: BarSeries) -> FeatureMatrix:
    return build_feature_matrix(
        bars, cfg["features.horizon"], cfg["features.vol_window"], cfg["data.n_noise_features"], cfg.seed
    )


@dataclass
class Split:
    train: np.ndarray  # window indices
    test: np.ndarray
    fit_rows: int  # rows [0, fit_rows) feed normalization and selection


def chronological_split(n_rows: int, window: int, horizon: int, train_fraction: float) -> Split:
    """Train windows first, then a purge gap of ``horizon`` windows, then test."""
    n_win = n_rows - window + 1
    cut = int(train_fraction * n_win)
    n_train = cut - horizon
    if n_train < 1 or n_win - cut < 2:
        raise SizeError(f"{n_rows} rows too few for window={window} and an 80/20 split")
    return Split(np.arange(n_train), np.arange(cut, n_win), n_train - 1 + window)


@dataclass
class PipelineResult:
    config: PipelineConfig
    fm: FeatureMatrix
    split: Split
    windows: WindowSet  # standardized, full feature universe
    selection: SelectionReport
    model: FusedModel
    metrics: MetricsReport
    predictions: np.ndarray
    log: TrainLog = field(default_factory=TrainLog)

    @property
    def train(self) -> WindowSet:
        return self.windows.subset(self.split.train)

    @property
    def test(self) -> WindowSet:
        return self.windows.subset(self.split.test)

    def test_inputs(self) -> list[np.ndarray]:
        cols = list(self.model.input_columns)
        ws = self.test
        return [ws[k][0][:, cols] for k in range(len(ws))]


@dataclass
class Prepared:
    """Features standardized with statistics of the training rows only."""

    fm: FeatureMatrix
    split: Split
    norm: Standardizer
    Xs: np.ndarray
    ys: np.ndarray
    y_mean: float
    y_std: float


def prepare(cfg: PipelineConfig, bars: BarSeries) -> Prepared:
    fm = feature_matrix(cfg, bars)
    split = chronological_split(fm.n, cfg["features.window"], fm.horizon, cfg["run.train_fraction"])
    norm = Standardizer.fit(fm.values[: split.fit_rows])
    y_fit = fm.y[: split.fit_rows]
    y_mean, y_std = float(y_fit.mean()), float(y_fit.std())
    if y_std == 0:
        y_std = 1.0
    return Prepared(fm, split, norm, norm.transform(fm.values), (fm.y - y_mean) / y_std, y_mean, y_std)


def initial_selection(cfg: PipelineConfig, prep: Prepared) -> SelectionReport:
    rows = prep.split.fit_rows
    return run_selection(prep.Xs[:rows], prep.ys[:rows], cfg.selection_config(), columns=prep.fm.columns)


def run_pipeline(cfg: PipelineConfig, bars: BarSeries) -> PipelineResult:
    prep = prepare(cfg, bars)
    fm, split, Xs, ys = prep.fm, prep.split, prep.Xs, prep.ys
    window = cfg["features.window"]
    sel_cfg = cfg.selection_config()
    selection = initial_selection(cfg, prep)

    tcfg = cfg.train_config()
    reselect = None
    if cfg["selection.reselect"]:
        rows = min(cfg["selection.reselect_rows"], split.fit_rows)
        span = split.fit_rows - rows
        last = max(tcfg.epochs - 1, 1)

        def reselect(epoch: int, prev: SelectionReport) -> SelectionReport:
            # sliding slice that reaches the newest training row on the final epoch
            hi = rows + (epoch * span) // last
            return dynamic_reselect(prev, Xs[hi - rows : hi], ys[hi - rows : hi], sel_cfg)

    windows = make_windows(Xs, window, ys)
    log = TrainLog()
    model = train(
        windows.subset(split.train), tcfg, selection, reselect, log,
        feature_mean=prep.norm.mean, feature_std=prep.norm.std,
        target_mean=prep.y_mean, target_std=prep.y_std,
        meta={"config": serialize_config(cfg), "columns": ",".join(fm.columns)},
    )
    test = windows.subset(split.test)
    preds = predict_windows(model, test, raw_scale=True)
    y_true = fm.y[test.starts + window - 1]
    metrics = evaluate(y_true, preds, "test")
    return PipelineResult(cfg, fm, split, windows, selection, model, metrics, preds, log)


def model_config(model: FusedModel) -> PipelineConfig:
    text = model.meta.get("config")
    return load_config(text) if text else PipelineConfig()


def predict_bars(model: FusedModel, bars: BarSeries) -> np.ndarray:
    """Raw-scale predictions for every window of ``bars`` under the model's
    feature settings."""
    cfg = model_config(model)
    fm = feature_matrix(cfg, bars)
    if model.feature_mean is None:
        Xs = fm.values
    else:
        Xs = (fm.values - model.feature_mean) / model.feature_std
    ws = make_windows(Xs, model.window, fm.y)
    return predict_windows(model, ws, raw_scale=True)
