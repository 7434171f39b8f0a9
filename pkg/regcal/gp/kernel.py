"""
RegCal - Distribution Kernel
Kernel between Gaussian-distributed inputs and jittered Gram factorisation
"""

import logging
from typing import Tuple

import numpy as np
import torch

from ..errors import DataError, NumericalError

logger = logging.getLogger(__name__)

JITTER_STEPS = (1e-6, 1e-5, 1e-4)


def song_kernel(mean_i: np.ndarray, cov_i: np.ndarray, mean_j: np.ndarray, cov_j: np.ndarray,
                lengthscale: float) -> float:
    """
    Expected squared-exponential kernel between two Gaussian inputs.

    k = theta^K |Sigma_ij|^(-1/2) exp(-1/2 d^T Sigma_ij^-1 d) with
    Sigma_ij = Sigma_i + Sigma_j + theta^2 I and d = mu_i - mu_j.

    Args:
        mean_i, mean_j: (K,) input means
        cov_i, cov_j: (K,) diagonal variances or (K, K) covariances
        lengthscale: theta > 0

    Returns:
        Kernel value in (0, 1]
    """
    if lengthscale <= 0:
        raise DataError("kernel lengthscale must be positive")
    mean_i = np.atleast_1d(np.asarray(mean_i, dtype=float))
    mean_j = np.atleast_1d(np.asarray(mean_j, dtype=float))
    k = mean_i.size
    if mean_j.size != k:
        raise DataError("kernel inputs differ in dimension")

    def as_matrix(cov) -> np.ndarray:
        cov = np.asarray(cov, dtype=float)
        return np.diag(np.atleast_1d(cov)) if cov.ndim <= 1 else cov

    joint = as_matrix(cov_i) + as_matrix(cov_j) + lengthscale ** 2 * np.eye(k)
    diff = mean_i - mean_j
    if not (np.all(np.isfinite(joint)) and np.all(np.isfinite(diff))):
        raise DataError("non-finite kernel input")
    sign, logdet = np.linalg.slogdet(joint)
    if sign <= 0:
        raise NumericalError("kernel covariance is not positive definite")
    maha = float(diff @ np.linalg.solve(joint, diff))
    return float(np.exp(k * np.log(lengthscale) - 0.5 * logdet - 0.5 * maha))


def song_kernel_matrix(mean_a: torch.Tensor, var_a: torch.Tensor,
                       mean_b: torch.Tensor, var_b: torch.Tensor,
                       lengthscale: torch.Tensor) -> torch.Tensor:
    """
    Pairwise kernel between two batches of diagonal Gaussian inputs.

    Args:
        mean_a, var_a: (A, K)
        mean_b, var_b: (B, K)
        lengthscale: scalar tensor

    Returns:
        (A, B) kernel matrix
    """
    joint = var_a[:, None, :] + var_b[None, :, :] + lengthscale ** 2
    diff = mean_a[:, None, :] - mean_b[None, :, :]
    k = mean_a.shape[-1]
    log_k = (k * torch.log(lengthscale)
             - 0.5 * torch.log(joint).sum(-1)
             - 0.5 * (diff ** 2 / joint).sum(-1))
    return torch.exp(log_k)


def song_kernel_diag(var: torch.Tensor, lengthscale: torch.Tensor) -> torch.Tensor:
    """k(x, x) for each row of a batch of diagonal Gaussian inputs, shape (N,)."""
    k = var.shape[-1]
    return torch.exp(k * torch.log(lengthscale) - 0.5 * torch.log(2.0 * var + lengthscale ** 2).sum(-1))


def gram(mean: torch.Tensor, var: torch.Tensor, lengthscale: torch.Tensor,
         jitter: float = JITTER_STEPS[0]) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Gram matrix of a set of inputs plus its Cholesky factor.

    Jitter escalates from the given value up to 1e-4 until the factorisation
    succeeds.

    Returns:
        (matrix with the jitter used, lower Cholesky factor)
    """
    if mean.shape[0] < 1:
        raise DataError("gram matrix needs at least one input")
    base = song_kernel_matrix(mean, var, mean, var, lengthscale)
    base = 0.5 * (base + base.transpose(-1, -2))
    eye = torch.eye(base.shape[0], dtype=base.dtype, device=base.device)

    steps = [jitter] + [step for step in JITTER_STEPS if step > jitter]
    for step in steps:
        matrix = base + step * eye
        chol, info = torch.linalg.cholesky_ex(matrix)
        if int(info) == 0:
            if step > jitter:
                logger.debug("Gram factorisation needed jitter %.0e", step)
            return matrix, chol
    raise NumericalError(f"gram matrix not positive definite with jitter up to {steps[-1]:.0e}")
