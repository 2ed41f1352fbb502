"""Training losses with forward values and analytic logit gradients.

Three objectives are supported: cross-entropy, scaled squared error, and
squentropy (cross-entropy plus the mean squared logit over incorrect
classes). Batch losses are means over samples; gradients are taken with
respect to the logits only, since features are fixed under a frozen
backbone and the weight gradient is grad_logits^T @ features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, InvalidLabelError, NonFiniteValueError

LOSS_KINDS = ("ce", "mse", "squentropy")
DEFAULT_KAPPA = 15.0
DEFAULT_BETA = 30.0


@dataclass(frozen=True)
class LossKind:
    """Loss selector. ``kappa`` weights the true-class squared error and
    ``beta`` sets its target magnitude; both apply to the mse kind only."""

    kind: str = "ce"
    kappa: float = DEFAULT_KAPPA
    beta: float = DEFAULT_BETA

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.kind == "mse" and (self.kappa <= 0 or self.beta <= 0):
            raise ValueError("mse needs kappa > 0 and beta > 0")


def _check_batch(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionMismatchError("need (N, C) logits and (N,) labels")
    if not np.all(np.isfinite(logits)):
        raise NonFiniteValueError("logits contain NaN or Inf")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InvalidLabelError("label outside [0, C)")
    return logits, labels


def _softmax_terms(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy values and softmax-minus-onehot gradients."""
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    rows = np.arange(len(labels))
    values = lse - logits[rows, labels]
    grads = np.exp(logits - lse[:, None])
    grads[rows, labels] -= 1.0
    return values, grads


def batch_ce(logits, labels) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy -u_y + logsumexp(u) and its logit gradient."""
    logits, labels = _check_batch(logits, labels)
    return _softmax_terms(logits, labels)


def batch_mse(logits, labels, kappa: float = DEFAULT_KAPPA, beta: float = DEFAULT_BETA):
    """Per-sample scaled squared error and its logit gradient.

    loss = (kappa (u_y - beta)^2 + sum_{c != y} u_c^2) / C
    """
    logits, labels = _check_batch(logits, labels)
    n, num_classes = logits.shape
    rows = np.arange(n)
    true = logits[rows, labels]
    sq = (logits**2).sum(axis=1) - true**2
    values = (kappa * (true - beta) ** 2 + sq) / num_classes
    grads = 2.0 * logits / num_classes
    grads[rows, labels] = 2.0 * kappa * (true - beta) / num_classes
    return values, grads


def batch_squentropy(logits, labels) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy plus mean squared logit over incorrect classes."""
    logits, labels = _check_batch(logits, labels)
    n, num_classes = logits.shape
    if num_classes < 2:
        raise DimensionMismatchError("squentropy needs at least 2 classes")
    values, grads = _softmax_terms(logits, labels)
    rows = np.arange(n)
    true = logits[rows, labels]
    sq = (logits**2).sum(axis=1) - true**2
    values = values + sq / (num_classes - 1)
    extra = 2.0 * logits / (num_classes - 1)
    extra[rows, labels] = 0.0
    return values, grads + extra


def batch_loss_and_grad(logits, labels, kind: LossKind) -> tuple[float, np.ndarray]:
    """Mean loss over a batch and the per-sample logit gradients."""
    if kind.kind == "ce":
        values, grads = batch_ce(logits, labels)
    elif kind.kind == "mse":
        values, grads = batch_mse(logits, labels, kind.kappa, kind.beta)
    else:
        values, grads = batch_squentropy(logits, labels)
    return float(values.mean()), grads


def ce_loss_and_grad(u, y: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of a single logit vector; stable for |u| up to 1e4."""
    values, grads = batch_ce(np.atleast_2d(u), [y])
    return float(values[0]), grads[0]


def mse_loss_and_grad(u, y: int, kappa: float = DEFAULT_KAPPA, beta: float = DEFAULT_BETA):
    """Scaled squared error of a single logit vector."""
    values, grads = batch_mse(np.atleast_2d(u), [y], kappa, beta)
    return float(values[0]), grads[0]


def squentropy_loss_and_grad(u, y: int) -> tuple[float, np.ndarray]:
    """Squentropy of a single logit vector."""
    values, grads = batch_squentropy(np.atleast_2d(u), [y])
    return float(values[0]), grads[0]


def loss_and_grad(u, y: int, kind: LossKind) -> tuple[float, np.ndarray]:
    """Single-sample dispatch over the three loss kinds."""
    loss, grads = batch_loss_and_grad(np.atleast_2d(u), [y], kind)
    return loss, grads[0]
