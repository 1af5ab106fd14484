"""OHLCV ingestion, synthetic bar generation, feature engineering and windowing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, OrderingError, ParseError, SizeError

CSV_HEADER = ("timestamp", "open", "high", "low", "close", "volume")

ENGINEERED_COLUMNS = (
    "simple_return",
    "log_return",
    "range_ratio",
    "volume_z",
    "rolling_vol",
    "close_z",
)

# Latent persistence of the planted signal in generate_synthetic.
SIGNAL_PERSISTENCE = 0.9
START_TIMESTAMP_US = 1_700_000_000_000_000
BAR_SPACING_US = 1_000_000


@dataclass(frozen=True)
class Bar:
    timestamp: int
    open: float
    high: float
    low: float
    close: float
    volume: float


@dataclass(frozen=True, eq=False)
class BarSeries:
    """Column-oriented bar storage. Arrays are made read-only on construction."""

    timestamp: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    symbol: str = ""

    def __post_init__(self):
        n = len(self.timestamp)
        for name in CSV_HEADER:
            arr = np.ascontiguousarray(
                getattr(self, name), dtype=np.int64 if name == "timestamp" else np.float64
            )
            if arr.shape != (n,):
                raise SizeError(f"column {name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if n > 1 and np.any(np.diff(self.timestamp) <= 0):
            bad = int(np.argmax(np.diff(self.timestamp) <= 0)) + 1
            raise OrderingError(f"timestamp at index {bad} is not strictly increasing")
        bad = _first_invalid_bar(self.open, self.high, self.low, self.close, self.volume)
        if bad is not None:
            raise DataError(f"bar {bad} violates OHLCV invariants")

    def __len__(self) -> int:
        return len(self.timestamp)

    def __getitem__(self, i: int) -> Bar:
        return Bar(
            int(self.timestamp[i]),
            float(self.open[i]),
            float(self.high[i]),
            float(self.low[i]),
            float(self.close[i]),
            float(self.volume[i]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, BarSeries):
            return NotImplemented
        return self.symbol == other.symbol and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in CSV_HEADER
        )

    @classmethod
    def from_bars(cls, bars: Iterable[Bar], symbol: str = "") -> "BarSeries":
        rows = list(bars)
        cols = {c: [getattr(b, c) for b in rows] for c in CSV_HEADER}
        return cls(symbol=symbol, **cols)

    def slice(self, start: int, stop: int) -> "BarSeries":
        return BarSeries(
            *(getattr(self, c)[start:stop] for c in CSV_HEADER), symbol=self.symbol
        )


def _first_invalid_bar(o, h, l, c, v) -> int | None:
    with np.errstate(invalid="ignore"):
        ok = (
            np.isfinite(o) & np.isfinite(h) & np.isfinite(l) & np.isfinite(c) & np.isfinite(v)
            & (o > 0) & (h > 0) & (l > 0) & (c > 0) & (v >= 0)
            & (l <= np.minimum(o, c)) & (h >= np.maximum(o, c))
        )
    if ok.all():
        return None
    return int(np.argmin(ok))


def parse_bar_csv(stream: TextIO | str, symbol: str = "") -> BarSeries:
    """Read ``timestamp,open,high,low,close,volume`` rows into a BarSeries.

    Errors carry the 1-based line number of the offending row (the header is
    line 1).
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header", line=1) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)

    rows: list[Bar] = []
    prev_ts = None
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"expected 6 fields, got {len(row)}", line=line)
        try:
            ts = int(row[0])
            o, h, l, c, v = (float(x) for x in row[1:])
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=line) from None
        if not all(math.isfinite(x) for x in (o, h, l, c, v)):
            raise ParseError("non-finite field", line=line)
        if prev_ts is not None and ts <= prev_ts:
            raise OrderingError(
                f"timestamp {ts} not greater than previous {prev_ts}", line=line
            )
        if min(o, h, l, c) <= 0 or v < 0 or l > min(o, c) or h < max(o, c):
            raise ParseError("OHLCV invariants violated", line=line)
        prev_ts = ts
        rows.append(Bar(ts, o, h, l, c, v))
    return BarSeries.from_bars(rows, symbol=symbol)


def write_bar_csv(bars: BarSeries, stream: TextIO) -> None:
    stream.write(",".join(CSV_HEADER) + "\n")
    for i in range(len(bars)):
        stream.write(
            "%d,%r,%r,%r,%r,%r\n"
            % (
                bars.timestamp[i],
                float(bars.open[i]),
                float(bars.high[i]),
                float(bars.low[i]),
                float(bars.close[i]),
                float(bars.volume[i]),
            )
        )


def bars_to_csv(bars: BarSeries) -> str:
    buf = io.StringIO()
    write_bar_csv(bars, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic bar generator.

    ``signal_strength`` is the correlation between a latent AR(1) state and
    the next bar's standardized log return. The latent state is exposed
    through the bar's wick length, so the engineered ``range_ratio`` column
    carries the planted signal.
    """

    n_bars: int = 4000
    seed: int = 0
    drift: float = 0.0
    volatility: float = 0.001
    regime_shift_period: int = 500
    n_noise_features: int = 4
    signal_strength: float = 0.5

    def __post_init__(self):
        if self.n_bars < 0:
            raise DataError("n_bars must be >= 0")
        if self.seed < 0:
            raise DataError("seed must be a non-negative integer")
        if not self.volatility >= 0:
            raise DataError("volatility must be >= 0")
        if self.regime_shift_period < 1:
            raise DataError("regime_shift_period must be >= 1")
        if self.n_noise_features < 0:
            raise DataError("n_noise_features must be >= 0")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise DataError("signal_strength must lie in [0, 1]")


def generate_synthetic(cfg: SynthConfig, symbol: str = "SYNTH") -> BarSeries:
    """Geometric random walk with volatility regimes and a planted predictor.

    Volatility doubles on every other block of ``regime_shift_period`` bars.
    """
    n = cfg.n_bars
    rng = np.random.default_rng(cfg.seed)
    phi = SIGNAL_PERSISTENCE
    innov = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    vol_noise = rng.standard_normal(n)

    latent = np.empty(n)
    if n:
        latent[0] = innov[0]
    for t in range(1, n):
        latent[t] = phi * latent[t - 1] + math.sqrt(1.0 - phi * phi) * innov[t]

    regime = (np.arange(n) // cfg.regime_shift_period) % 2
    sigma = cfg.volatility * np.where(regime == 1, 2.0, 1.0)

    ss = cfg.signal_strength
    log_ret = np.zeros(n)
    log_ret[1:] = cfg.drift + sigma[1:] * (
        ss * latent[:-1] + math.sqrt(1.0 - ss * ss) * eps[1:]
    )
    close = 100.0 * np.exp(np.cumsum(log_ret))
    open_ = np.empty(n)
    if n:
        open_[0] = 100.0
        open_[1:] = close[:-1]
    wick = close * 2.0 * cfg.volatility * np.exp(0.5 * latent)
    high = np.maximum(open_, close) + wick
    low = np.minimum(open_, close) - wick
    # keep prices positive for extreme volatility settings
    low = np.maximum(low, np.minimum(open_, close) * 0.5)
    volume = 1e4 * np.exp(0.3 * vol_noise)
    ts = START_TIMESTAMP_US + BAR_SPACING_US * np.arange(n, dtype=np.int64)
    return BarSeries(ts, open_, high, low, close, volume, symbol=symbol)


def _zscore_last(x: np.ndarray, window: int) -> np.ndarray:
    win = sliding_window_view(x, window)
    mean = win.mean(axis=1)
    std = win.std(axis=1)
    dev = x[window - 1 :] - mean
    out = np.zeros_like(dev)
    np.divide(dev, std, out=out, where=std > 0)
    return out


def _column(name: str, o, h, l, c, v, window: int) -> np.ndarray:
    """Feature values for bars ``window-1 .. len(c)-1`` of the given arrays."""
    if name == "simple_return":
        return c[window - 1 :] / c[window - 2 : -1] - 1.0
    if name == "log_return":
        return np.log(c[window - 1 :] / c[window - 2 : -1])
    if name == "range_ratio":
        return (h[window - 1 :] - l[window - 1 :]) / c[window - 1 :]
    if name == "volume_z":
        return _zscore_last(v, window)
    if name == "rolling_vol":
        lr = np.log(c[1:] / c[:-1])
        return sliding_window_view(lr, window - 1).std(axis=1)
    if name == "close_z":
        return _zscore_last(c, window)
    raise KeyError(name)


def noise_columns(n_bars: int, n_noise: int, seed: int) -> np.ndarray:
    """Per-bar standard-normal control columns, shape (n_bars, n_noise)."""
    rng = np.random.default_rng([seed, 0x6E6F697365])
    return rng.standard_normal((n_bars, n_noise))


def compute_features(
    bars: BarSeries,
    columns: Iterable[str],
    vol_window: int,
    noise: np.ndarray | None = None,
    start: int = 0,
    stop: int | None = None,
) -> np.ndarray:
    """Feature rows for bars ``[start, stop)`` given the named columns.

    Reads bars from ``start - vol_window + 1`` for lookback. ``noise`` holds
    the per-bar noise columns of the whole series (``noise_<j>`` names).
    Used for both batch construction and single-window extraction so that
    both paths produce identical arithmetic.
    """
    stop = len(bars) if stop is None else stop
    lo = start - vol_window + 1
    if lo < 0 or stop > len(bars) or stop <= start:
        raise SizeError(f"rows [{start}, {stop}) need lookback from bar {lo}")
    o, h, l, c, v = (
        bars.open[lo:stop], bars.high[lo:stop], bars.low[lo:stop],
        bars.close[lo:stop], bars.volume[lo:stop],
    )
    cols = []
    for name in columns:
        if name.startswith("noise_"):
            if noise is None:
                raise DataError(f"column {name} requested without noise array")
            cols.append(noise[start:stop, int(name[6:])])
        else:
            cols.append(_column(name, o, h, l, c, v, vol_window))
    return np.column_stack(cols) if cols else np.empty((stop - start, 0))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Row ``r`` describes bar ``r + offset``; ``y[r]`` is its forward return."""

    values: np.ndarray
    columns: tuple[str, ...]
    y: np.ndarray
    offset: int
    horizon: int

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.y):
            raise SizeError("values/y shape mismatch")
        if self.values.shape[1] != len(self.columns) or not self.columns:
            raise SizeError("need at least one uniquely named column")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("column names must be unique")
        if not (np.isfinite(self.values).all() and np.isfinite(self.y).all()):
            raise DataError("feature matrix contains non-finite values")
        self.values.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "FeatureMatrix":
        return FeatureMatrix(
            self.values[start:stop].copy(), self.columns, self.y[start:stop].copy(),
            self.offset + start, self.horizon,
        )


def feature_names(n_noise: int) -> tuple[str, ...]:
    return ENGINEERED_COLUMNS + tuple(f"noise_{j}" for j in range(n_noise))


def forward_returns(close: np.ndarray, horizon: int) -> np.ndarray:
    """Simple return from bar t to t+horizon, for t in [0, n-horizon)."""
    return close[horizon:] / close[:-horizon] - 1.0


def build_feature_matrix(
    bars: BarSeries, horizon: int = 1, vol_window: int = 20, n_noise: int = 0, seed: int = 0
) -> FeatureMatrix:
    if horizon < 1 or vol_window < 2 or n_noise < 0:
        raise SizeError("need horizon >= 1, vol_window >= 2, n_noise >= 0")
    n = len(bars)
    if n <= vol_window + horizon - 1:
        raise SizeError(
            f"{n} bars is too short for vol_window={vol_window}, horizon={horizon}"
        )
    first = vol_window - 1
    last = n - horizon  # exclusive
    noise = noise_columns(n, n_noise, seed)
    values = compute_features(bars, feature_names(n_noise), vol_window, noise, first, last)
    y = forward_returns(bars.close, horizon)[first:last]
    return FeatureMatrix(values, feature_names(n_noise), y, first, horizon)


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Windows of ``window`` consecutive rows paired with the last row's target.

    Window ``i`` covers rows ``starts[i] .. starts[i] + window - 1``.
    """

    values: np.ndarray
    targets: np.ndarray
    window: int
    starts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.starts is None:
            object.__setattr__(
                self, "starts", np.arange(self.values.shape[0] - self.window + 1)
            )

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i: int) -> tuple[np.ndarray, float]:
        s = int(self.starts[i])
        return self.values[s : s + self.window], float(self.targets[s + self.window - 1])

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def subset(self, index) -> "WindowSet":
        return WindowSet(self.values, self.targets, self.window, self.starts[index])

    def batch(self, index, columns=None) -> tuple[np.ndarray, np.ndarray]:
        """Stacked windows, shape (B, window, d) or (B, window, len(columns))."""
        starts = self.starts[index]
        src = self.values if columns is None else self.values[:, list(columns)]
        view = sliding_window_view(src, self.window, axis=0)  # (n-w+1, d, w)
        xb = np.ascontiguousarray(view[starts].transpose(0, 2, 1))
        return xb, self.targets[starts + self.window - 1]

    def all_targets(self) -> np.ndarray:
        return self.targets[self.starts + self.window - 1]


def make_windows(fm: FeatureMatrix | np.ndarray, window: int, y: np.ndarray | None = None) -> WindowSet:
    values = fm.values if isinstance(fm, FeatureMatrix) else np.asarray(fm, dtype=float)
    targets = fm.y if isinstance(fm, FeatureMatrix) else np.asarray(y, dtype=float)
    n = values.shape[0]
    if window < 1 or window > n:
        raise SizeError(f"window must be in [1, {n}], got {window}")
    return WindowSet(values, targets, window)


def planted_signal_matrix(
    n: int,
    n_features: int = 5,
    signal_strength: float = 0.6,
    seed: int = 0,
    signal_col: int = 0,
    swap_col: int | None = None,
    swap_at: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Standard-normal features where exactly one column correlates with y.

    With ``swap_col`` and ``swap_at`` the signal moves from ``signal_col`` to
    ``swap_col`` from row ``swap_at`` onwards.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n_features))
    eps = rng.standard_normal(n)
    src = np.full(n, signal_col)
    if swap_col is not None:
        src[swap_at:] = swap_col
    driver = X[np.arange(n), src]
    y = signal_strength * driver + math.sqrt(1.0 - signal_strength**2) * eps
    return X, y
