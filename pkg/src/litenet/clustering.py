"""k-means++ seeding with Lloyd refinement, plus column standardization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateDataError, SizeError


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        # constant columns pass through centred
        std = np.where(std > 0, std, 1.0)
        return cls(X.mean(axis=0), std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centers: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,)
    sizes: np.ndarray  # (k,)
    objective: float
    iterations_run: int
    history: tuple[float, ...]  # objective after every assignment step

    @property
    def k(self) -> int:
        return self.centers.shape[0]


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _assign(X, centers):
    d2 = _sq_dists(X, centers)
    labels = np.argmin(d2, axis=1)  # first minimum -> lowest index on ties
    best = d2[np.arange(len(X)), labels]
    return labels, best


def kmeans_objective(X: np.ndarray, model: ClusterModel | np.ndarray) -> float:
    """Sum over points of the squared distance to the nearest center."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    centers = model.centers if isinstance(model, ClusterModel) else np.atleast_2d(model)
    if centers.shape[1] != X.shape[1]:
        raise SizeError(f"centers have d={centers.shape[1]}, data has d={X.shape[1]}")
    return float(_sq_dists(X, centers).min(axis=1).sum())


def _seed_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each step draws several D^2 candidates and keeps the
    one that lowers the potential most."""
    n = len(X)
    trials = 2 + int(math.log(k))
    idx = [int(rng.integers(n))]
    closest = _sq_dists(X, X[idx]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            raise DegenerateDataError(f"fewer than k={k} distinct points")
        cum = np.cumsum(closest)
        draws = rng.random(trials) * total
        cand = np.minimum(np.searchsorted(cum, draws, side="right"), n - 1)
        cand_d2 = np.minimum(closest[None, :], _sq_dists(X, X[cand]).T)
        pick = int(np.argmin(cand_d2.sum(axis=1)))
        idx.append(int(cand[pick]))
        closest = cand_d2[pick]
    return X[idx].copy()


def _fill_empty(X, centers, labels, best):
    """Move centers of empty clusters onto the currently worst-served point."""
    k = len(centers)
    for _ in range(k):
        sizes = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            return centers, labels, best
        far = int(np.argmax(best))
        if best[far] <= 0:
            break
        centers = centers.copy()
        centers[empty[0]] = X[far]
        labels, best = _assign(X, centers)
    if np.any(np.bincount(labels, minlength=k) == 0):
        raise DegenerateDataError(f"cannot populate {k} clusters: too few distinct points")
    return centers, labels, best


def fit_kmeans(
    X: np.ndarray, k: int, max_iter: int = 100, tol: float = 1e-6, seed: int = 0, n_init: int = 10
) -> ClusterModel:
    """Best of ``n_init`` seeded k-means++/Lloyd runs (lowest objective, first on ties)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k < 1 or max_iter < 1 or tol < 0 or n_init < 1:
        raise SizeError("need k >= 1, max_iter >= 1, tol >= 0, n_init >= 1")
    if n < k:
        raise SizeError(f"n={n} points cannot form k={k} clusters")
    if not np.isfinite(X).all():
        raise DataError("non-finite value in clustering input")

    rng = np.random.default_rng(seed)
    best_model = None
    for _ in range(n_init):
        model = _lloyd(X, _seed_centers(X, k, rng), max_iter, tol)
        if best_model is None or model.objective < best_model.objective:
            best_model = model
    return best_model


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int, tol: float) -> ClusterModel:
    k = len(centers)
    labels, best = _assign(X, centers)
    centers, labels, best = _fill_empty(X, centers, labels, best)
    history = [float(best.sum())]

    it = 0
    while it < max_iter:
        it += 1
        sizes = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        new_centers = sums / sizes[:, None]
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        labels, best = _assign(X, centers)
        centers, labels, best = _fill_empty(X, centers, labels, best)
        history.append(float(best.sum()))
        if shift < tol:
            break

    sizes = np.bincount(labels, minlength=k)
    return ClusterModel(
        centers=centers,
        assignments=labels,
        sizes=sizes,
        objective=history[-1],
        iterations_run=it,
        history=tuple(history),
    )
