"""Per-class feature statistics, least-square deviation, and collapse metrics.

All statistics operate on bias-extended features (last coordinate exactly 1)
accumulated in float64. The collapse metrics nc1..nc4 follow the standard
definitions on the bias-free feature block; the constant bias coordinate
contributes nothing to any covariance, so stripping it is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    BiasCoordinateError,
    DimensionMismatchError,
    MissingClassError,
    ZeroNormError,
)
from .numerics import DEFAULT_RANK_TOL, sym_pinv


@dataclass(frozen=True)
class ClassStatistics:
    """First and second moments of a labeled, bias-extended feature set.

    ``class_means`` has one column per class. ``total_cov`` is the covariance
    around the global mean, ``within_cov`` around each sample's class mean,
    and ``between_cov`` the unweighted spread of class means around the
    global mean (rank at most C-1 by construction).
    """

    global_mean: np.ndarray
    class_means: np.ndarray
    total_cov: np.ndarray
    within_cov: np.ndarray
    between_cov: np.ndarray
    counts: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.global_mean)

    @property
    def class_count(self) -> int:
        return self.class_means.shape[1]

    def second_moment(self, lam: float = 0.0) -> np.ndarray:
        """total_cov + global_mean outer product (+ lam on the diagonal).

        Equals the raw feature second-moment matrix Z Z^T / N, the system
        matrix of the closed-form ridge head.
        """
        h = self.total_cov + np.outer(self.global_mean, self.global_mean)
        if lam:
            h = h + lam * np.eye(self.dim)
        return h


def compute_stats(features: np.ndarray, labels: np.ndarray) -> ClassStatistics:
    """Single-pass class statistics over bias-extended features.

    Every class in 0..max(labels) must have at least one sample and every
    row must end in exactly 1.
    """
    z = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise DimensionMismatchError("features must be (N, dim) with one label per row")
    bad = z[:, -1] != 1.0
    if bad.any():
        raise BiasCoordinateError(f"row {int(bad.argmax())} does not end in 1")
    n, dim = z.shape
    num_classes = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=num_classes)
    if (counts == 0).any():
        raise MissingClassError(f"class {int((counts == 0).argmax())} has no samples")
    sums = np.zeros((num_classes, dim))
    np.add.at(sums, labels, z)
    class_means = (sums / counts[:, None]).T
    global_mean = z.mean(axis=0)
    dev_total = z - global_mean
    total_cov = dev_total.T @ dev_total / n
    dev_within = z - class_means.T[labels]
    within_cov = dev_within.T @ dev_within / n
    dev_between = class_means - global_mean[:, None]
    between_cov = dev_between @ dev_between.T / num_classes
    return ClassStatistics(
        global_mean=global_mean,
        class_means=class_means,
        total_cov=total_cov,
        within_cov=within_cov,
        between_cov=between_cov,
        counts=counts,
    )


def ls_deviation(weights: np.ndarray, stats: ClassStatistics, lam: float) -> float:
    """Quadratic-form distance between a head and the closed-form ridge head.

    Returns 0.5 * tr{(W - W_ls) H (W - W_ls)^T} with H the (regularized)
    feature second moment; zero exactly when the head equals the analytic
    solution, and non-negative whenever H is positive semi-definite.
    """
    from .initializers import least_square_weights

    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (stats.class_count, stats.dim):
        raise DimensionMismatchError(
            f"weights {weights.shape} vs stats ({stats.class_count}, {stats.dim})"
        )
    w_ls = least_square_weights(stats, lam)
    delta = weights - w_ls
    h = stats.second_moment(lam)
    return 0.5 * float(np.sum((delta @ h) * delta))


def _etf_gram(num_classes: int) -> np.ndarray:
    eye = np.eye(num_classes)
    ones = np.ones((num_classes, num_classes)) / num_classes
    return (eye - ones) / np.sqrt(num_classes - 1)


def nc1(stats: ClassStatistics) -> float:
    """Within-class variability relative to between-class spread.

    trace(within_cov pinv(between_cov)) / C on the bias-free block; zero
    when every class collapses onto its mean.
    """
    within = stats.within_cov[:-1, :-1]
    between = stats.between_cov[:-1, :-1]
    value = np.trace(within @ sym_pinv(between, DEFAULT_RANK_TOL))
    return float(value) / stats.class_count


def nc2(weights: np.ndarray) -> float:
    """Distance of the normalized weight Gram matrix from the ideal simplex.

    ``weights`` is the head's linear block (bias column excluded). Zero when
    the rows form an exact simplex equiangular tight frame.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 2:
        raise DimensionMismatchError("need a (C, d) weight matrix with C >= 2")
    gram = w @ w.T
    norm = float(np.linalg.norm(gram))
    if norm == 0.0:
        raise ZeroNormError("weight Gram matrix is zero")
    return float(np.linalg.norm(gram / norm - _etf_gram(w.shape[0])))


def nc3(weights: np.ndarray, stats: ClassStatistics) -> float:
    """Self-duality: distance of normalized W @ centered-means from the simplex."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 2:
        raise DimensionMismatchError("need a (C, d) weight matrix with C >= 2")
    centered = (stats.class_means - stats.global_mean[:, None])[:-1, :]
    if w.shape != (stats.class_count, stats.dim - 1):
        raise DimensionMismatchError(
            f"weights {w.shape} vs centered means {centered.T.shape}"
        )
    product = w @ centered
    norm = float(np.linalg.norm(product))
    if norm == 0.0:
        raise ZeroNormError("W @ centered class means is zero")
    return float(np.linalg.norm(product / norm - _etf_gram(w.shape[0])))


def nc4(weights: np.ndarray, bias: np.ndarray, stats: ClassStatistics) -> float:
    """Bias collapse: ||b + W mu_G|| on the bias-free feature block."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64).ravel()
    if w.shape != (stats.class_count, stats.dim - 1) or b.shape != (w.shape[0],):
        raise DimensionMismatchError(
            f"weights {w.shape}, bias {b.shape} vs stats ({stats.class_count}, {stats.dim - 1})"
        )
    return float(np.linalg.norm(b + w @ stats.global_mean[:-1]))
