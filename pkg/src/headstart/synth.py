"""Seeded synthetic feature streams with controllable class-mean geometry.

Streams are Gaussian mixtures: class means laid out either as a simplex
equiangular tight frame (maximally separated on a sphere) or as random
Gaussian draws, plus isotropic within-class noise. An optional common
offset shifts every mean along a fixed direction, mimicking the large
shared mean of real backbone activations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datastore import FeatureDataset
from .exceptions import DimensionMismatchError

MEAN_LAYOUTS = ("simplex_etf", "random_gaussian")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic stream (train and test splits)."""

    class_count: int
    dim: int
    mean_layout: str = "simplex_etf"
    mean_scale: float = 1.0
    within_std: float = 0.1
    samples_per_class: int = 100
    test_samples_per_class: int | None = None
    mean_offset: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.class_count < 2:
            raise ValueError("need at least 2 classes")
        if self.within_std < 0:
            raise ValueError("within_std must be non-negative")
        if self.mean_layout not in MEAN_LAYOUTS:
            raise ValueError(f"mean_layout must be one of {MEAN_LAYOUTS}")
        if self.mean_layout == "simplex_etf" and self.dim < self.class_count - 1:
            raise DimensionMismatchError(
                f"simplex layout needs dim >= C-1, got dim={self.dim}, C={self.class_count}"
            )
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")


def gen_simplex_etf_means(C: int, d: int, scale: float, seed: int = 0) -> np.ndarray:
    """Class means forming an exact simplex equiangular tight frame.

    Returns a (d, C) matrix whose columns have norm ``scale`` and pairwise
    inner products -scale^2/(C-1). The frame's (C-1)-dimensional span is
    embedded via a seeded orthonormal basis; signs are fixed so the result
    is deterministic.
    """
    if d < C - 1:
        raise DimensionMismatchError(f"need d >= C-1, got d={d}, C={C}")
    # Columns 2..C of the Householder reflection mapping e_1 to 1/sqrt(C)
    # form an orthonormal basis of the simplex span (the complement of 1).
    v = np.full(C, 1.0 / np.sqrt(C))
    v[0] -= 1.0
    householder = np.eye(C) - 2.0 * np.outer(v, v) / (v @ v)
    basis = householder[:, 1:]
    vertices = np.sqrt(C / (C - 1.0)) * basis.T
    embed = np.random.default_rng(seed).standard_normal((d, C - 1))
    q, r = np.linalg.qr(embed)
    q = q * np.sign(np.diag(r))
    return scale * (q @ vertices)


def gen_stream(spec: SynthSpec) -> tuple[FeatureDataset, FeatureDataset]:
    """Generate (train, test) datasets; deterministic given the spec's seed."""
    means = class_means(spec)
    rng = np.random.default_rng([spec.seed, 2])
    train = _sample(means, spec.within_std, spec.samples_per_class, rng, "train")
    test_count = spec.test_samples_per_class or spec.samples_per_class
    test = _sample(means, spec.within_std, test_count, rng, "test")
    return train, test


def class_means(spec: SynthSpec) -> np.ndarray:
    """The (d, C) mean matrix a spec generates samples around."""
    if spec.mean_layout == "simplex_etf":
        means = gen_simplex_etf_means(spec.class_count, spec.dim, spec.mean_scale, spec.seed)
    else:
        rng = np.random.default_rng([spec.seed, 1])
        means = rng.normal(0.0, spec.mean_scale, size=(spec.dim, spec.class_count))
    if spec.mean_offset:
        means = means + spec.mean_offset / np.sqrt(spec.dim)
    return means


def _sample(
    means: np.ndarray,
    within_std: float,
    per_class: int,
    rng: np.random.Generator,
    split: str,
) -> FeatureDataset:
    dim, num_classes = means.shape
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.standard_normal((num_classes * per_class, dim))
    features = means.T[labels] + within_std * noise
    return FeatureDataset(features.astype(np.float32), labels, split)
