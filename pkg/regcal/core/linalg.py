"""
RegCal - Linear Algebra Kernel
Cholesky with a single jitter step, LDL^T factorisation and covariance repair
"""

import logging
from typing import Tuple

import numpy as np

from ..errors import NumericalError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-9
JITTER_REL = 1e-6


def check_symmetric(cov: np.ndarray) -> None:
    """Raise if any matrix in a (..., K, K) stack is not symmetric within 1e-9 relative."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim < 2 or cov.shape[-1] != cov.shape[-2]:
        raise NumericalError(f"expected square matrices, got shape {cov.shape}")
    scale = np.maximum(np.abs(cov).max(axis=(-2, -1)), 1e-300)
    asym = np.abs(cov - np.swapaxes(cov, -1, -2)).max(axis=(-2, -1))
    bad = np.flatnonzero(np.atleast_1d(asym > SYMMETRY_RTOL * scale))
    if bad.size:
        raise NumericalError(f"covariance matrix {int(bad[0])} is not symmetric")


def _pivots(cov: np.ndarray) -> np.ndarray:
    """Unpivoted LDL^T pivots of a single symmetric matrix (Schur complements)."""
    work = np.array(cov, dtype=float)
    k = work.shape[0]
    pivots = np.empty(k)
    for j in range(k):
        pivots[j] = work[j, j]
        if j + 1 < k and pivots[j] != 0.0:
            col = work[j + 1:, j] / pivots[j]
            work[j + 1:, j + 1:] -= np.outer(col, work[j, j + 1:])
    return pivots


def _cholesky_single(cov: np.ndarray, index: int) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass

    k = cov.shape[-1]
    jitter = JITTER_REL * np.trace(cov) / k
    logger.debug("Cholesky failed for matrix %d, adding jitter %.3e", index, jitter)
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(k))
    except np.linalg.LinAlgError:
        smallest = float(_pivots(cov).min())
        raise NumericalError(
            f"covariance matrix {index} is not positive definite "
            f"(smallest pivot {smallest:.6g})"
        ) from None


def cholesky(cov: np.ndarray) -> np.ndarray:
    """
    Lower Cholesky factor of one matrix or a stack of matrices.

    A failing matrix gets 1e-6 * trace / K added to its diagonal once; if it still
    fails, NumericalError reports the smallest LDL pivot.

    Args:
        cov: (K, K) or (N, K, K) symmetric positive definite matrices

    Returns:
        Lower triangular factors with the same shape as cov
    """
    cov = np.asarray(cov, dtype=float)
    check_symmetric(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass

    if cov.ndim == 2:
        return _cholesky_single(cov, 0)

    flat = cov.reshape(-1, cov.shape[-2], cov.shape[-1])
    factors = np.stack([_cholesky_single(mat, i) for i, mat in enumerate(flat)])
    return factors.reshape(cov.shape)


def ldl_decompose(cov: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    LDL^T factorisation with unit lower triangular L and positive diagonal D.

    Args:
        cov: (K, K) or (N, K, K) symmetric positive definite matrices

    Returns:
        Tuple (L, d) where L has the shape of cov and d holds the diagonal of D
        with shape (..., K)
    """
    chol = cholesky(cov)
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    unit_lower = chol / diag[..., None, :]
    return unit_lower, diag ** 2


def ldl_reconstruct(unit_lower: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Rebuild L diag(d) L^T."""
    return (unit_lower * d[..., None, :]) @ np.swapaxes(unit_lower, -1, -2)


def logdet_from_cholesky(chol: np.ndarray) -> np.ndarray:
    """Log determinant from a Cholesky factor."""
    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)


def mahalanobis_sq(residual: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distance r^T cov^-1 r via a Cholesky solve."""
    chol = cholesky(cov)
    residual = np.asarray(residual, dtype=float)
    white = np.linalg.solve(chol, residual[..., None])[..., 0]
    return (white ** 2).sum(axis=-1)


def repair_spd(mat: np.ndarray, floor_rel: float = 1e-6) -> np.ndarray:
    """
    Nearest SPD matrix by eigenvalue clipping at floor_rel * largest eigenvalue.

    Args:
        mat: (K, K) symmetric matrix
        floor_rel: relative floor for the eigenvalues

    Returns:
        Symmetric positive definite matrix
    """
    mat = 0.5 * (mat + mat.T)
    eigval, eigvec = np.linalg.eigh(mat)
    top = eigval.max()
    if top <= 0:
        raise NumericalError("matrix has no positive eigenvalue, cannot repair")
    clipped = np.maximum(eigval, floor_rel * top)
    repaired = (eigvec * clipped) @ eigvec.T
    return 0.5 * (repaired + repaired.T)
