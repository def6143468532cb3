"""Dense linear algebra: SPD factorization/solves and covariance accumulation.

All carriers are float64 numpy arrays. Reductions keep numpy's fixed
summation order, so repeated runs on identical inputs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, EmptyInput, NotPositiveDefinite

SYMMETRY_RTOL = 1e-10


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor L with A = L @ L.T."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def spd_factor(m) -> SpdFactor:
    """Cholesky-factor a symmetric positive-definite matrix.

    Raises NotPositiveDefinite when the matrix is not PD (degenerate
    covariance; the caller should regularize and retry).
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix is not square: {a.shape}")
    scale = np.max(np.abs(a))
    if scale > 0 and np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if np.any(np.diag(lower) <= 0.0):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factor")
    return SpdFactor(lower=lower)


def spd_solve(f: SpdFactor, b) -> np.ndarray:
    """Solve (L L^T) x = b via two triangular solves."""
    rhs = np.asarray(b, dtype=np.float64)
    if rhs.shape[0] != f.dim:
        raise DimensionMismatch(f"factor dim {f.dim} vs rhs dim {rhs.shape[0]}")
    y = solve_triangular(f.lower, rhs, lower=True)
    return solve_triangular(f.lower.T, y, lower=False)


def spd_inverse(f: SpdFactor) -> np.ndarray:
    """Dense inverse of the factored matrix, symmetrized exactly."""
    inv_l = solve_triangular(f.lower, np.eye(f.dim), lower=True)
    p = inv_l.T @ inv_l
    return 0.5 * (p + p.T)


def mean_and_cov(samples) -> tuple[np.ndarray, np.ndarray]:
    """Mean and biased (1/N) covariance of a list of vectors.

    The covariance is normalized by N, not N-1, and is exactly symmetric.
    """
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        x = np.asarray(samples, dtype=np.float64)
    else:
        samples = list(samples)
        if len(samples) == 0:
            raise EmptyInput("need at least one sample")
        dims = {np.asarray(s).shape for s in samples}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise DimensionMismatch(f"inconsistent sample shapes: {dims}")
        x = np.asarray(samples, dtype=np.float64)
    if x.shape[0] == 0:
        raise EmptyInput("need at least one sample")
    n = x.shape[0]
    mu = x.sum(axis=0) / n
    centered = x - mu
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    return mu, cov
