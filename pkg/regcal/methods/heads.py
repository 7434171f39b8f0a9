"""
RegCal - Recalibration Heads
Likelihoods that map GP latent draws to recalibrated distributions at training time
"""

import math
from typing import Any, Dict, Optional

import numpy as np
import torch
from scipy import special
from torch.nn import functional as F

from ..config import CDF_EPS
from ..core import CalibrationDataset, cholesky
from ..errors import DataError
from ..gp.svgp import DTYPE
from .covariance import CorrelationTemplate, base_factors

LOG_2PI = math.log(2.0 * math.pi)


# ============================================================================
# Beta link
# ============================================================================

def beta_link(p, a, b, c) -> np.ndarray:
    """
    Beta-calibration map g(p) = logistic(a ln p - b ln(1 - p) + c).

    Args:
        p: probabilities, clamped to [eps, 1 - eps]
        a, b: positive shape weights (broadcastable)
        c: real offset

    Returns:
        Recalibrated probabilities in [eps, 1 - eps], nondecreasing in p
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DataError("beta link needs positive a and b")
    p = np.clip(np.asarray(p, dtype=float), CDF_EPS, 1.0 - CDF_EPS)
    g = special.expit(a * np.log(p) - b * np.log1p(-p) + c)
    # the logistic saturates to exactly 0 or 1 for large |a|, |b|
    return np.clip(g, CDF_EPS, 1.0 - CDF_EPS)


def beta_link_derivative(p, a, b, c) -> np.ndarray:
    """g'(p) = g (1 - g) (a / p + b / (1 - p))."""
    p = np.clip(np.asarray(p, dtype=float), CDF_EPS, 1.0 - CDF_EPS)
    g = beta_link(p, a, b, c)
    return g * (1.0 - g) * (a / p + b / (1.0 - p))


def _tensor(values: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(values), dtype=DTYPE)


# ============================================================================
# Heads
# ============================================================================

class NormalHead:
    """Per-dimension variance weights w = exp(f): N(mu, w sigma^2)."""

    tag = "normal"

    def latent_dim(self, k: int) -> int:
        return k

    def context(self, dataset: CalibrationDataset, extras: Dict[str, Any]) -> Dict[str, torch.Tensor]:
        return {
            "residual": _tensor(dataset.residuals),
            "var": _tensor(dataset.prediction.variances),
        }

    def log_likelihood(self, f: torch.Tensor, ctx: Dict[str, torch.Tensor]) -> torch.Tensor:
        var_hat = torch.exp(f) * ctx["var"]
        logpdf = -0.5 * (LOG_2PI + torch.log(var_hat) + ctx["residual"] ** 2 / var_hat)
        return logpdf.sum(-1)


class CauchyHead:
    """Cauchy(x0 = mu, gamma = w sigma) with w = exp(f)."""

    tag = "cauchy"

    def latent_dim(self, k: int) -> int:
        return k

    def context(self, dataset: CalibrationDataset, extras: Dict[str, Any]) -> Dict[str, torch.Tensor]:
        return {
            "residual": _tensor(dataset.residuals),
            "std": _tensor(dataset.prediction.std),
        }

    def log_likelihood(self, f: torch.Tensor, ctx: Dict[str, torch.Tensor]) -> torch.Tensor:
        gamma = torch.exp(f) * ctx["std"]
        logpdf = -math.log(math.pi) - torch.log(gamma) - torch.log1p((ctx["residual"] / gamma) ** 2)
        return logpdf.sum(-1)


class NormalMVHead:
    """Joint rescaling diag(sqrt w) Sigma diag(sqrt w) scored by the multivariate normal."""

    tag = "normal_mv"

    def latent_dim(self, k: int) -> int:
        return k

    def context(self, dataset: CalibrationDataset, extras: Dict[str, Any]) -> Dict[str, torch.Tensor]:
        return {
            "residual": _tensor(dataset.residuals),
            "chol": _tensor(cholesky(dataset.prediction.covariance())),
        }

    def log_likelihood(self, f: torch.Tensor, ctx: Dict[str, torch.Tensor]) -> torch.Tensor:
        chol = ctx["chol"]
        k = chol.shape[-1]
        scaled = ctx["residual"] * torch.exp(-0.5 * f)
        white = torch.linalg.solve_triangular(
            chol.expand(f.shape[0], *chol.shape), scaled[..., None], upper=False
        )[..., 0]
        logdet = 2.0 * torch.log(torch.diagonal(chol, dim1=-2, dim2=-1)).sum(-1) + f.sum(-1)
        return -0.5 * ((white ** 2).sum(-1) + logdet + k * LOG_2PI)


class BetaHead:
    """
    Beta-link CDF warp per dimension with latents laid out (a, b, c) per dimension:
    a = exp(f_3d), b = exp(f_3d+1), c = f_3d+2.
    """

    tag = "beta"

    def latent_dim(self, k: int) -> int:
        return 3 * k

    def context(self, dataset: CalibrationDataset, extras: Dict[str, Any]) -> Dict[str, torch.Tensor]:
        z = dataset.z_scores
        p = np.clip(special.ndtr(z), CDF_EPS, 1.0 - CDF_EPS)
        log_base = -0.5 * (LOG_2PI + z ** 2) - np.log(dataset.prediction.std)
        return {"p": _tensor(p), "log_base": _tensor(log_base)}

    def log_likelihood(self, f: torch.Tensor, ctx: Dict[str, torch.Tensor]) -> torch.Tensor:
        a = torch.exp(f[..., 0::3])
        b = torch.exp(f[..., 1::3])
        c = f[..., 2::3]
        p = ctx["p"]
        z = a * torch.log(p) - b * torch.log1p(-p) + c
        log_g = -F.softplus(-z)
        log_1mg = -F.softplus(z)
        log_slope = torch.log(a / p + b / (1.0 - p))
        return (log_g + log_1mg + log_slope + ctx["log_base"]).sum(-1)


class CovarianceHead:
    """
    LDL rescaling of a base covariance. Latents: first K are log w_D, the remaining
    K(K+1)/2 fill the lower triangle row by row (diagonal slots included but unused)
    with w_L = 1 + latent.

    mode "estimate" builds the base covariance from a correlation template and the
    predicted standard deviations; mode "recalibrate" uses the predicted covariance.
    """

    def __init__(self, mode: str = "estimate"):
        if mode not in ("estimate", "recalibrate"):
            raise DataError(f"unknown covariance mode {mode!r}")
        self.mode = mode
        self.tag = "covariance"

    def latent_dim(self, k: int) -> int:
        return k + k * (k + 1) // 2

    def template(self, extras: Dict[str, Any]) -> Optional[CorrelationTemplate]:
        if self.mode == "recalibrate":
            return None
        if "template" not in extras:
            raise DataError("covariance estimation needs a correlation template")
        return CorrelationTemplate.from_payload(extras["template"])

    def context(self, dataset: CalibrationDataset, extras: Dict[str, Any]) -> Dict[str, torch.Tensor]:
        if self.mode == "recalibrate" and not dataset.prediction.is_full:
            raise DataError("covariance recalibration needs full covariance predictions")
        unit_lower, d = base_factors(dataset.prediction, self.template(extras))
        return {
            "residual": _tensor(dataset.residuals),
            "unit_lower": _tensor(unit_lower),
            "d": _tensor(d),
        }

    @staticmethod
    def weights(f: torch.Tensor, k: int):
        """Split latents into (w_L lower-triangular weight matrices, w_D)."""
        w_diag = torch.exp(f[..., :k])
        rows, cols = torch.tril_indices(k, k)
        w_lower = torch.zeros(*f.shape[:-1], k, k, dtype=f.dtype, device=f.device)
        w_lower[..., rows, cols] = 1.0 + f[..., k:]
        return w_lower, w_diag

    def log_likelihood(self, f: torch.Tensor, ctx: Dict[str, torch.Tensor]) -> torch.Tensor:
        unit_lower, d, residual = ctx["unit_lower"], ctx["d"], ctx["residual"]
        k = d.shape[-1]
        w_lower, w_diag = self.weights(f, k)
        eye = torch.eye(k, dtype=f.dtype, device=f.device)
        scaled = torch.tril(unit_lower * w_lower, diagonal=-1) + eye
        d_hat = d * w_diag
        white = torch.linalg.solve_triangular(
            scaled, residual.expand(f.shape[0], *residual.shape)[..., None],
            upper=False, unitriangular=True,
        )[..., 0]
        maha = (white ** 2 / d_hat).sum(-1)
        return -0.5 * (maha + torch.log(d_hat).sum(-1) + k * LOG_2PI)


HEADS = {
    "normal": NormalHead,
    "cauchy": CauchyHead,
    "normal_mv": NormalMVHead,
    "beta": BetaHead,
}


def make_head(tag: str, mode: Optional[str] = None):
    """Head instance for a tag; the covariance head also takes its mode."""
    if tag == "covariance":
        return CovarianceHead(mode or "estimate")
    if tag not in HEADS:
        raise DataError(f"unknown head {tag!r}")
    return HEADS[tag]()
