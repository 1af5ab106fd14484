"""Kernel-density mutual information and feature gating/ranking."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import Standardizer, fit_kmeans
from .errors import DataError, DegenerateDataError, SizeError
from .feature_weights import FeatureWeightVector, feature_weights

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
DENSITY_FLOOR = 1e-300


def gaussian_kernel(u: np.ndarray) -> np.ndarray:
    return INV_SQRT_2PI * np.exp(-0.5 * u * u)


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    n = len(x)
    sd = float(x.std(ddof=1))
    if not sd > 0:
        raise DegenerateDataError("zero-variance axis: mutual information undefined")
    span = float(x.max() - x.min())
    return max(1.06 * sd * n ** (-0.2), 1e-9 * span)


def kde_density(x, y, gx, gy, hx: float, hy: float) -> np.ndarray:
    """Product-Gaussian KDE evaluated on the grid ``gx`` x ``gy``.

    Returns ``p[a, b]`` = density at ``(gx[a], gy[b])``. No sample-count
    restriction, so a single sample is allowed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    kx = gaussian_kernel((np.asarray(gx)[:, None] - x[None, :]) / hx) / hx
    ky = gaussian_kernel((np.asarray(gy)[:, None] - y[None, :]) / hy) / hy
    return (kx @ ky.T) / len(x)


@dataclass(frozen=True, eq=False)
class JointDensityGrid:
    gx: np.ndarray
    gy: np.ndarray
    density: np.ndarray  # (G, G), rescaled to unit Riemann mass
    px: np.ndarray
    py: np.ndarray
    hx: float
    hy: float
    n: int
    raw_mass: float  # Riemann mass before rescaling

    @property
    def dx(self) -> float:
        return float(self.gx[1] - self.gx[0])

    @property
    def dy(self) -> float:
        return float(self.gy[1] - self.gy[0])

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.dx * self.dy)


def kde_joint_grid(x, y, grid_size: int = 64, bandwidth: tuple[float, float] | None = None) -> JointDensityGrid:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise SizeError("x and y must be equal-length vectors")
    if len(x) < 2:
        raise SizeError("need at least 2 samples")
    if grid_size < 8:
        raise SizeError("grid size must be >= 8")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("non-finite sample")
    if bandwidth is None:
        hx, hy = silverman_bandwidth(x), silverman_bandwidth(y)
    else:
        hx, hy = bandwidth
    gx = np.linspace(x.min() - 3 * hx, x.max() + 3 * hx, grid_size)
    gy = np.linspace(y.min() - 3 * hy, y.max() + 3 * hy, grid_size)
    dens = kde_density(x, y, gx, gy, hx, hy)
    dx, dy = gx[1] - gx[0], gy[1] - gy[0]
    raw_mass = float(dens.sum() * dx * dy)
    dens = dens / raw_mass
    px = dens.sum(axis=1) * dy
    py = dens.sum(axis=0) * dx
    return JointDensityGrid(gx, gy, dens, px, py, hx, hy, len(x), raw_mass)


def mutual_information(grid: JointDensityGrid, floor: bool = True) -> float:
    """Riemann-sum plug-in MI (nats) over the grid cells."""
    p = grid.density
    outer = grid.px[:, None] * grid.py[None, :]
    live = p >= DENSITY_FLOOR
    terms = p[live] * np.log(p[live] / outer[live])
    mi = float(terms.sum() * grid.dx * grid.dy)
    if floor and -1e-9 <= mi < 0:
        return 0.0
    return mi


def mi_score(x, y, grid_size: int = 64) -> float:
    return mutual_information(kde_joint_grid(x, y, grid_size))


@dataclass(frozen=True, eq=False)
class SelectionReport:
    mi: np.ndarray
    weights: np.ndarray
    threshold: float
    rank: np.ndarray  # rank[i] = position of feature i in the weight ordering
    selected: tuple[int, ...]
    cycle: int = 0
    fallback: bool = False
    padded: tuple[int, ...] = ()
    columns: tuple[str, ...] = ()
    kernel: str = "gaussian"
    bandwidth_rule: str = "silverman"
    grid_size: int = 64

    def __eq__(self, other) -> bool:
        if not isinstance(other, SelectionReport):
            return NotImplemented
        return (
            np.array_equal(self.mi, other.mi)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.rank, other.rank)
            and (self.threshold, self.selected, self.cycle, self.fallback, self.padded, self.columns)
            == (other.threshold, other.selected, other.cycle, other.fallback, other.padded, other.columns)
        )

    @property
    def d(self) -> int:
        return len(self.mi)

    def survivors(self) -> list[int]:
        """Features passing the MI gate, in weight order (before the top_m cut)."""
        order = np.argsort(self.rank)
        return [int(i) for i in order if self.mi[i] >= self.threshold]

    def name(self, i: int) -> str:
        return self.columns[i] if self.columns else f"f{i}"


def _weight_order(w: np.ndarray) -> list[int]:
    return sorted(range(len(w)), key=lambda i: (-w[i], i))


def feature_mi(X: np.ndarray, y: np.ndarray, grid_size: int = 64, workers: int = 1) -> np.ndarray:
    """MI of every column with y. Constant columns score 0."""
    X = np.asarray(X, dtype=float)

    def one(i):
        try:
            return mi_score(X[:, i], y, grid_size)
        except DegenerateDataError:
            if np.ptp(X[:, i]) == 0:
                return 0.0
            raise

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return np.array(list(pool.map(one, range(X.shape[1]))))
    return np.array([one(i) for i in range(X.shape[1])])


def select_features(
    X: np.ndarray,
    y: np.ndarray,
    weights: FeatureWeightVector | np.ndarray,
    mi_threshold: float,
    top_m: int,
    grid_size: int = 64,
    cycle: int = 0,
    columns: tuple[str, ...] = (),
    workers: int = 1,
) -> SelectionReport:
    """Gate features by MI, rank survivors by weight, keep at most ``top_m``.

    If nothing passes the gate the single highest-MI feature is returned and
    ``fallback`` is set.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = weights.weights if isinstance(weights, FeatureWeightVector) else np.asarray(weights, float)
    if top_m < 1:
        raise SizeError("top_m must be >= 1")
    if X.ndim != 2 or X.shape[1] != len(w) or X.shape[0] != len(y):
        raise SizeError("X columns must match weights and rows must match y")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite value in selection input")
    mi = feature_mi(X, y, grid_size, workers)
    order = _weight_order(w)
    rank = np.empty(len(w), dtype=int)
    rank[order] = np.arange(len(w))
    survivors = [i for i in order if mi[i] >= mi_threshold]
    fallback = not survivors
    if fallback:
        selected = (int(np.argmax(mi)),)
    else:
        selected = tuple(survivors[:top_m])
    return SelectionReport(
        mi=mi, weights=w.copy(), threshold=float(mi_threshold), rank=rank,
        selected=selected, cycle=cycle, fallback=fallback, columns=tuple(columns),
        grid_size=grid_size,
    )


def pad_selection(report: SelectionReport, min_count: int) -> SelectionReport:
    """Top up the selection with the best remaining features by MI."""
    if len(report.selected) >= min_count:
        return report
    if min_count > report.d:
        raise SizeError(f"cannot select {min_count} of {report.d} features")
    extra = [i for i in sorted(range(report.d), key=lambda i: (-report.mi[i], i))
             if i not in report.selected][: min_count - len(report.selected)]
    chosen = sorted(set(report.selected) | set(extra), key=lambda i: report.rank[i])
    return replace(report, selected=tuple(chosen), padded=tuple(sorted(extra)))


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 10
    max_iter: int = 100
    tol: float = 1e-6
    mi_threshold: float = 0.05
    top_m: int = 5
    grid_size: int = 64
    min_selected: int = 1
    seed: int = 0
    workers: int = 1


def run_selection(X, y, cfg: SelectionConfig, cycle: int = 0, columns: tuple[str, ...] = ()) -> SelectionReport:
    """Standardize, cluster, weight, gate and rank one slice of data."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise SizeError("selection slice is empty")
    if not np.isfinite(X).all():
        raise DataError("non-finite value in selection input")
    Xs = Standardizer.fit(X).transform(X)
    model = fit_kmeans(Xs, cfg.k, cfg.max_iter, cfg.tol, cfg.seed)
    fw = feature_weights(Xs, model)
    report = select_features(
        Xs, y, fw, cfg.mi_threshold, cfg.top_m, cfg.grid_size, cycle, columns, cfg.workers
    )
    return pad_selection(report, cfg.min_selected)


def dynamic_reselect(prev: SelectionReport, X_recent, y_recent, cfg: SelectionConfig) -> SelectionReport:
    X_recent = np.asarray(X_recent, dtype=float)
    if X_recent.ndim != 2 or X_recent.shape[0] == 0:
        raise SizeError("recent slice is empty")
    if X_recent.shape[1] != prev.d:
        raise SizeError(f"recent slice has {X_recent.shape[1]} features, expected {prev.d}")
    return run_selection(X_recent, y_recent, cfg, cycle=prev.cycle + 1, columns=prev.columns)


def format_selection(report: SelectionReport) -> str:
    lines = [
        f"# cycle={report.cycle} threshold={report.threshold:g} fallback={str(report.fallback).lower()}"
        f" kernel={report.kernel} bandwidth={report.bandwidth_rule} grid={report.grid_size}",
        f"{'feature':<16} {'weight':>14} {'mi':>10} selected",
    ]
    for i in range(report.d):
        flag = "yes" if i in report.selected else "no"
        if i in report.padded:
            flag = "padded"
        lines.append(f"{report.name(i):<16} {report.weights[i]:>14.6g} {report.mi[i]:>10.5f} {flag}")
    return "\n".join(lines) + "\n"
