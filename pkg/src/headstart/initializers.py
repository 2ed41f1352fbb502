"""Classifier-head construction: closed-form ridge, class-mean, and random rows.

The head weight matrix is (C, d+1) with the bias folded into the last column,
so the closed-form solve produces weights and bias jointly. New-class rows
are installed without touching previously learned rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    MissingStatsError,
    NonContiguousClassesError,
    NonFiniteValueError,
    NotOneHotError,
    UnknownClassError,
)
from .numerics import spd_solve

if TYPE_CHECKING:
    from .stats import ClassStatistics

INIT_KINDS = ("random", "class_mean", "least_square")
DEFAULT_RIDGE_LAMBDA = 0.05


@dataclass(frozen=True)
class ClassifierHead:
    """Linear classifier over bias-extended features; row c scores class c."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 2:
            raise DimensionMismatchError(f"bad head shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise NonFiniteValueError("head weights contain NaN or Inf")

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def linear(self) -> np.ndarray:
        """Weight block acting on the raw features (bias column dropped)."""
        return self.weights[:, :-1]

    @property
    def bias(self) -> np.ndarray:
        return self.weights[:, -1]

    def logits(self, extended_features: np.ndarray) -> np.ndarray:
        """Scores for bias-extended feature rows: (N, dim) -> (N, C)."""
        return np.asarray(extended_features, dtype=np.float64) @ self.weights.T


@dataclass(frozen=True)
class InitStrategy:
    """How to initialize rows for newly encountered classes."""

    kind: str = "least_square"
    lam: float = DEFAULT_RIDGE_LAMBDA
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in INIT_KINDS:
            raise ValueError(f"kind must be one of {INIT_KINDS}, got {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")


def least_square_weights(stats: "ClassStatistics", lam: float) -> np.ndarray:
    """Closed-form ridge head from class statistics.

    Solves the regularized normal equations expressed through the class-mean
    matrix and the feature second moment, via an SPD solve of the transposed
    system (no explicit inverse). Rows jointly regress one-hot targets.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    h = stats.second_moment(lam)
    solved = spd_solve(h, stats.class_means / stats.class_count)
    return solved.T


def direct_ridge_weights(z: np.ndarray, y: np.ndarray, lambda_prime: float) -> np.ndarray:
    """Ridge head straight from data: W = Y Z^T (Z Z^T + lambda' I)^{-1}.

    ``z`` is (d+1, N) bias-extended features by column, ``y`` is (C, N)
    one-hot labels by column. Equals :func:`least_square_weights` with
    lambda' = N * lam when classes are balanced.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z.ndim != 2 or y.ndim != 2 or z.shape[1] != y.shape[1]:
        raise DimensionMismatchError(f"Z {z.shape} and Y {y.shape} disagree on N")
    if lambda_prime < 0:
        raise ValueError("lambda_prime must be non-negative")
    onehot = (y == 1.0).sum(axis=0) == 1
    zeros = (y == 0.0).sum(axis=0) == y.shape[0] - 1
    if not np.all(onehot & zeros):
        raise NotOneHotError(f"column {int((~(onehot & zeros)).argmax())} is not one-hot")
    gram = z @ z.T + lambda_prime * np.eye(z.shape[0])
    return spd_solve(gram, z @ y.T).T


def class_mean_weights(stats: "ClassStatistics", class_ids) -> np.ndarray:
    """Head rows set to the (bias-extended) class means of the given ids."""
    ids = np.asarray(class_ids, dtype=np.int64).ravel()
    if ids.size and (ids.min() < 0 or ids.max() >= stats.class_count):
        bad = ids[(ids < 0) | (ids >= stats.class_count)][0]
        raise UnknownClassError(f"class {int(bad)} not covered by statistics")
    return stats.class_means[:, ids].T.copy()


def random_weights(new_class_count: int, dim: int, seed) -> np.ndarray:
    """Uniform fan-in rows: entries i.i.d. on [-1/sqrt(dim), +1/sqrt(dim)]."""
    if new_class_count < 0 or dim < 1:
        raise DimensionMismatchError("need new_class_count >= 0 and dim >= 1")
    bound = 1.0 / np.sqrt(dim)
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=(new_class_count, dim))


def expand_head(
    head: ClassifierHead,
    new_class_ids,
    strategy: InitStrategy,
    stats: "ClassStatistics | None" = None,
) -> ClassifierHead:
    """Append rows for new classes, leaving existing rows bit-for-bit intact.

    ``new_class_ids`` must extend the head's contiguous class range. For the
    least-square strategy the full closed-form head over all seen classes is
    computed from ``stats`` (old buffered data plus new data) but only the
    new rows are installed.
    """
    ids = np.asarray(new_class_ids, dtype=np.int64).ravel()
    if ids.size == 0:
        return head
    expected = np.arange(head.class_count, head.class_count + ids.size)
    if not np.array_equal(ids, expected):
        raise NonContiguousClassesError(
            f"new ids {ids.tolist()} must be {expected.tolist()}"
        )
    if strategy.kind == "random":
        rows = random_weights(ids.size, head.dim, strategy.seed)
    else:
        if stats is None:
            raise MissingStatsError(f"{strategy.kind} initialization needs statistics")
        if stats.class_count != head.class_count + ids.size or stats.dim != head.dim:
            raise DimensionMismatchError(
                f"stats cover ({stats.class_count}, {stats.dim}), head expects "
                f"({head.class_count + ids.size}, {head.dim})"
            )
        if strategy.kind == "class_mean":
            rows = class_mean_weights(stats, ids)
        else:
            rows = least_square_weights(stats, strategy.lam)[ids]
    return ClassifierHead(np.vstack([head.weights, rows]))
