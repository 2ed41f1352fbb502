"""Minimal dense linear-algebra kernel used by every other module.

All routines work on float64 arrays regardless of the caller's storage
dtype: the covariance systems solved here stay well conditioned up to a
few hundred dimensions only in double precision.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import (
    DimensionMismatchError,
    EigenFailureError,
    EmptyInputError,
    NonFiniteValueError,
    NotPositiveDefiniteError,
    NotSymmetricError,
)

SYMMETRY_RTOL = 1e-9
CHOLESKY_JITTERS = (0.0, 1e-12, 1e-10, 1e-8)
DEFAULT_RANK_TOL = 1e-10


def _as_finite_f64(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFiniteValueError(f"{name} contains NaN or Inf entries")
    return a


def _check_symmetric(a: np.ndarray, name: str = "A") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
    if a.size and float(np.abs(a - a.T).max()) > SYMMETRY_RTOL * scale:
        raise NotSymmetricError(f"{name} is not symmetric within rtol {SYMMETRY_RTOL}")


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A X = B for symmetric positive-definite A via Cholesky.

    If the factorization fails (e.g. A is only positive semi-definite
    because the regularizer is zero), retries with escalating diagonal
    jitter before giving up. Never forms an explicit inverse.
    """
    a = _as_finite_f64(a, "A")
    b = _as_finite_f64(b, "B")
    _check_symmetric(a)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatchError(
            f"B has {b.shape[0]} rows, expected {a.shape[0]}"
        )
    a = 0.5 * (a + a.T)
    eye = np.eye(a.shape[0])
    for jitter in CHOLESKY_JITTERS:
        try:
            lower = np.linalg.cholesky(a + jitter * eye if jitter else a)
        except np.linalg.LinAlgError:
            continue
        y = scipy.linalg.solve_triangular(lower, b, lower=True)
        return scipy.linalg.solve_triangular(lower.T, y, lower=False)
    raise NotPositiveDefiniteError(
        f"Cholesky failed for all jitters {CHOLESKY_JITTERS[1:]}"
    )


def sym_pinv(a: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric matrix.

    Uses a symmetric eigendecomposition; eigenvalues with magnitude at or
    below ``rank_tol * max|eig|`` are treated as exact zeros, so matrices
    that are singular by construction (e.g. a between-class covariance of
    rank C-1) invert cleanly on their column space.
    """
    a = _as_finite_f64(a, "A")
    _check_symmetric(a)
    a = 0.5 * (a + a.T)
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(str(exc)) from exc
    cutoff = rank_tol * float(np.abs(vals).max()) if vals.size else 0.0
    keep = np.abs(vals) > cutoff
    inv_vals = np.zeros_like(vals)
    inv_vals[keep] = 1.0 / vals[keep]
    return (vecs * inv_vals) @ vecs.T


def log_sum_exp(v) -> float:
    """Numerically stable log(sum(exp(v))) for a nonempty finite vector."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInputError("log_sum_exp of an empty vector")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValueError("log_sum_exp input contains NaN or Inf")
    m = float(v.max())
    return m + float(np.log(np.exp(v - m).sum()))
