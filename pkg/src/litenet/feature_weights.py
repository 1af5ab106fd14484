"""Per-feature weights from within-cluster dispersion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel
from .errors import DataError, SizeError

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureWeightVector:
    weights: np.ndarray  # (d,)
    variances: np.ndarray  # (d, k)
    cluster_probs: np.ndarray  # (k,)
    clamped: np.ndarray  # (d,) bool, True where the variance floor was applied

    @property
    def weighted_variance(self) -> np.ndarray:
        return self.variances @ self.cluster_probs


def weighted_cluster_variance(X: np.ndarray, model: ClusterModel) -> np.ndarray:
    """Population variance of every feature inside every cluster, shape (d, k)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != len(model.assignments) or X.shape[1] != model.centers.shape[1]:
        raise SizeError("model was not fitted on data of this shape")
    k = model.k
    out = np.empty((X.shape[1], k))
    for j in range(k):
        members = X[model.assignments == j]
        if len(members) == 0:
            raise RuntimeError(f"cluster {j} is empty")
        mu = members.mean(axis=0)
        out[:, j] = ((members - mu) ** 2).sum(axis=0) / len(members)
    return out


def cluster_probabilities(model: ClusterModel) -> np.ndarray:
    return model.sizes / model.sizes.sum()


def compute_feature_weights(variances: np.ndarray, cluster_probs: np.ndarray) -> FeatureWeightVector:
    """Reciprocal of the cluster-probability-weighted variance of each feature.

    The denominator is floored at ``VARIANCE_FLOOR``; affected features are
    flagged in ``clamped``.
    """
    variances = np.atleast_2d(np.asarray(variances, dtype=float))
    probs = np.asarray(cluster_probs, dtype=float)
    if variances.shape[1] != probs.shape[0]:
        raise SizeError("variance columns must match cluster count")
    if np.any(variances < 0) or not np.isfinite(variances).all():
        raise DataError("variances must be finite and non-negative")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise DataError("cluster probabilities must lie on the simplex")
    denom = variances @ probs
    clamped = denom < VARIANCE_FLOOR
    weights = 1.0 / np.where(clamped, VARIANCE_FLOOR, denom)
    return FeatureWeightVector(weights, variances, probs, clamped)


def feature_weights(X: np.ndarray, model: ClusterModel) -> FeatureWeightVector:
    return compute_feature_weights(weighted_cluster_variance(X, model), cluster_probabilities(model))
