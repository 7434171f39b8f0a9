"""
RegCal - Distribution Value Types
Gaussian, Cauchy and grid-CDF predictions with cdf / quantile / log-density evaluation

All types hold a batch of N predictions over K output dimensions (N may be 1).
"""

from dataclasses import dataclass, field
from functools import singledispatch
from typing import Optional, Union

import numpy as np
from scipy import special, stats

from ..config import CDF_EPS
from ..errors import DataError, NumericalError
from . import linalg

ArrayLike = Union[float, np.ndarray]

# 0.8413... = Phi(1): half the central interval between these levels is one sigma
_ONE_SIGMA_LEVELS = (float(special.ndtr(-1.0)), float(special.ndtr(1.0)))


# ============================================================================
# Value Types
# ============================================================================

@dataclass(frozen=True)
class GaussianPrediction:
    """
    Normal predictions with diagonal variances or full covariance matrices.

    Exactly one of var / cov is given. Means and scales are in output-space units.
    """
    mean: np.ndarray
    var: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", mean)
        n, k = mean.shape

        if (self.var is None) == (self.cov is None):
            raise DataError("GaussianPrediction needs exactly one of var or cov")

        if self.var is not None:
            var = np.asarray(self.var, dtype=float).reshape(n, k)
            if not np.all(var > 0):
                bad = np.argwhere(~(var > 0))[0]
                raise DataError(f"variance of sample {bad[0]}, dim {bad[1]} is not positive")
            object.__setattr__(self, "var", var)
        else:
            cov = np.asarray(self.cov, dtype=float).reshape(n, k, k)
            if not np.all(np.diagonal(cov, axis1=1, axis2=2) > 0):
                raise DataError("covariance diagonal must be positive")
            try:
                linalg.cholesky(cov)
            except NumericalError as exc:
                raise DataError(str(exc)) from None
            object.__setattr__(self, "cov", cov)

        if not np.all(np.isfinite(mean)):
            raise DataError("non-finite mean")

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.mean.shape[1]

    @property
    def is_full(self) -> bool:
        return self.cov is not None

    @property
    def variances(self) -> np.ndarray:
        """Marginal variances (N, K)."""
        if self.var is not None:
            return self.var
        return np.diagonal(self.cov, axis1=1, axis2=2).copy()

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def covariance(self) -> np.ndarray:
        """Full covariance stack (N, K, K); diagonal inputs are expanded."""
        if self.cov is not None:
            return self.cov
        return self.var[:, :, None] * np.eye(self.k)[None]

    def subset(self, index) -> "GaussianPrediction":
        index = np.atleast_1d(index)
        if self.cov is not None:
            return GaussianPrediction(mean=self.mean[index], cov=self.cov[index])
        return GaussianPrediction(mean=self.mean[index], var=self.var[index])


@dataclass(frozen=True)
class CauchyPrediction:
    """Independent Cauchy(x0, gamma) predictions per dimension."""
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.loc, dtype=float))
        scale = np.asarray(self.scale, dtype=float).reshape(loc.shape)
        if not np.all(scale > 0):
            raise DataError("Cauchy scale must be positive")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def n(self) -> int:
        return self.loc.shape[0]

    @property
    def k(self) -> int:
        return self.loc.shape[1]

    def subset(self, index) -> "CauchyPrediction":
        index = np.atleast_1d(index)
        return CauchyPrediction(loc=self.loc[index], scale=self.scale[index])


@dataclass(frozen=True)
class NonparametricDistribution:
    """
    Grid-based CDF per sample and dimension (dimensions independent).

    support and cdf have shape (N, G, K); support strictly increasing along G,
    cdf nondecreasing within [0, 1]. Evaluation clamps to [eps, 1 - eps].
    """
    support: np.ndarray
    cdf: np.ndarray
    eps: float = field(default=CDF_EPS)

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        values = np.asarray(self.cdf, dtype=float)
        if support.ndim == 2:
            support = support[..., None]
            values = values[..., None]
        if support.shape != values.shape or support.ndim != 3:
            raise DataError(f"support/cdf shape mismatch: {support.shape} vs {values.shape}")
        if support.shape[1] < 2:
            raise DataError("grid needs at least two points")
        if not np.all(np.diff(support, axis=1) > 0):
            raise DataError("support grid must be strictly increasing")
        if np.any(np.diff(values, axis=1) < 0):
            raise DataError("cdf values must be nondecreasing")
        if values[:, 0].min() < 0 or values[:, -1].max() > 1:
            raise DataError("cdf values must lie in [0, 1]")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "cdf", values)

    @property
    def n(self) -> int:
        return self.support.shape[0]

    @property
    def k(self) -> int:
        return self.support.shape[2]

    @property
    def grid_size(self) -> int:
        return self.support.shape[1]

    def subset(self, index) -> "NonparametricDistribution":
        index = np.atleast_1d(index)
        return NonparametricDistribution(
            support=self.support[index], cdf=self.cdf[index], eps=self.eps
        )


Distribution = Union[GaussianPrediction, CauchyPrediction, NonparametricDistribution]


# ============================================================================
# Helpers
# ============================================================================

def _check_dim(dist: Distribution, dim: int) -> None:
    if not 0 <= dim < dist.k:
        raise DataError(f"dimension index {dim} out of range for K={dist.k}")


def _per_sample(values: ArrayLike, n: int) -> np.ndarray:
    """Broadcast y or tau to a leading sample axis: scalar -> (N,), (N, ...) kept."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape[0] != n:
        if n == 1:
            return arr[None]
        raise DataError(f"expected leading sample axis of length {n}, got {arr.shape}")
    return arr


def _expand(param: np.ndarray, target: np.ndarray) -> np.ndarray:
    return param.reshape(param.shape + (1,) * (target.ndim - 1))


def _check_finite(y: np.ndarray) -> None:
    if not np.all(np.isfinite(y)):
        raise DataError("non-finite evaluation point")


def _check_levels(tau: np.ndarray) -> None:
    if not np.all((tau > 0) & (tau < 1)):
        raise DataError("quantile levels must lie in the open interval (0, 1)")


def _interp_rows(x: np.ndarray, xp: np.ndarray, fp: np.ndarray,
                 left: float, right: float) -> np.ndarray:
    """Row-wise linear interpolation; x is (N,) or (N, T), xp/fp are (N, G)."""
    squeeze = x.ndim == 1
    x2 = x[:, None] if squeeze else x
    out = np.empty_like(x2, dtype=float)
    for i in range(x2.shape[0]):
        out[i] = np.interp(x2[i], xp[i], fp[i], left=left, right=right)
    return out[:, 0] if squeeze else out


def _invert_rows(tau: np.ndarray, cdf: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Generalised inverse of a nondecreasing piecewise-linear CDF, row by row."""
    squeeze = tau.ndim == 1
    t2 = tau[:, None] if squeeze else tau
    out = np.empty_like(t2, dtype=float)
    size = cdf.shape[1]
    for i in range(t2.shape[0]):
        upper = np.clip(np.searchsorted(cdf[i], t2[i], side="left"), 1, size - 1)
        lower = upper - 1
        f_lo, f_hi = cdf[i, lower], cdf[i, upper]
        width = f_hi - f_lo
        frac = np.where(width > 0, (t2[i] - f_lo) / np.where(width > 0, width, 1.0), 1.0)
        frac = np.clip(frac, 0.0, 1.0)
        out[i] = support[i, lower] + frac * (support[i, upper] - support[i, lower])
    return out[:, 0] if squeeze else out


# ============================================================================
# cdf
# ============================================================================

@singledispatch
def cdf(dist, y: ArrayLike, dim: int) -> np.ndarray:
    """
    Cumulative distribution of dimension dim evaluated at y.

    Args:
        dist: GaussianPrediction, CauchyPrediction or NonparametricDistribution
        y: scalar, (N,) or (N, T) evaluation points
        dim: output dimension index

    Returns:
        Probabilities with the broadcast shape of y
    """
    raise DataError(f"unsupported distribution type {type(dist).__name__}")


@cdf.register
def _(dist: GaussianPrediction, y: ArrayLike, dim: int) -> np.ndarray:
    _check_dim(dist, dim)
    y = _per_sample(y, dist.n)
    _check_finite(y)
    mu = _expand(dist.mean[:, dim], y)
    sigma = _expand(dist.std[:, dim], y)
    return special.ndtr((y - mu) / sigma)


@cdf.register
def _(dist: CauchyPrediction, y: ArrayLike, dim: int) -> np.ndarray:
    _check_dim(dist, dim)
    y = _per_sample(y, dist.n)
    _check_finite(y)
    loc = _expand(dist.loc[:, dim], y)
    scale = _expand(dist.scale[:, dim], y)
    return 0.5 + np.arctan((y - loc) / scale) / np.pi


@cdf.register
def _(dist: NonparametricDistribution, y: ArrayLike, dim: int) -> np.ndarray:
    _check_dim(dist, dim)
    y = _per_sample(y, dist.n)
    _check_finite(y)
    lo, hi = dist.eps, 1.0 - dist.eps
    values = _interp_rows(y, dist.support[:, :, dim], dist.cdf[:, :, dim], left=lo, right=hi)
    return np.clip(values, lo, hi)


# ============================================================================
# quantile
# ============================================================================

@singledispatch
def quantile(dist, tau: ArrayLike, dim: int) -> np.ndarray:
    """
    Inverse CDF of dimension dim at level tau.

    Args:
        dist: distribution batch
        tau: scalar, (N,) or (N, T) levels in (0, 1)
        dim: output dimension index

    Returns:
        Quantiles with the broadcast shape of tau
    """
    raise DataError(f"unsupported distribution type {type(dist).__name__}")


@quantile.register
def _(dist: GaussianPrediction, tau: ArrayLike, dim: int) -> np.ndarray:
    _check_dim(dist, dim)
    tau = _per_sample(tau, dist.n)
    _check_levels(tau)
    mu = _expand(dist.mean[:, dim], tau)
    sigma = _expand(dist.std[:, dim], tau)
    return mu + sigma * special.ndtri(tau)


@quantile.register
def _(dist: CauchyPrediction, tau: ArrayLike, dim: int) -> np.ndarray:
    _check_dim(dist, dim)
    tau = _per_sample(tau, dist.n)
    _check_levels(tau)
    loc = _expand(dist.loc[:, dim], tau)
    scale = _expand(dist.scale[:, dim], tau)
    return loc + scale * np.tan(np.pi * (tau - 0.5))


@quantile.register
def _(dist: NonparametricDistribution, tau: ArrayLike, dim: int) -> np.ndarray:
    _check_dim(dist, dim)
    tau = _per_sample(tau, dist.n)
    _check_levels(tau)
    clamped = np.clip(dist.cdf[:, :, dim], dist.eps, 1.0 - dist.eps)
    return _invert_rows(tau, clamped, dist.support[:, :, dim])


# ============================================================================
# log density
# ============================================================================

def _check_targets(dist: Distribution, y: np.ndarray) -> np.ndarray:
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape != (dist.n, dist.k):
        raise DataError(f"targets of shape {y.shape} do not match predictions ({dist.n}, {dist.k})")
    _check_finite(y)
    return y


@singledispatch
def log_density(dist, y: np.ndarray) -> np.ndarray:
    """
    Joint log density of the (N, K) targets y, one value per sample.

    Diagonal and independent types sum the per-dimension log densities; full
    covariance Gaussians use the multivariate normal density.
    """
    raise DataError(f"unsupported distribution type {type(dist).__name__}")


@log_density.register
def _(dist: GaussianPrediction, y: np.ndarray) -> np.ndarray:
    y = _check_targets(dist, y)
    if not dist.is_full:
        return stats.norm.logpdf(y, loc=dist.mean, scale=dist.std).sum(axis=1)
    chol = linalg.cholesky(dist.cov)
    if not np.all(np.isfinite(chol)):
        raise NumericalError("covariance factorisation produced non-finite values")
    white = np.linalg.solve(chol, (y - dist.mean)[..., None])[..., 0]
    logdet = linalg.logdet_from_cholesky(chol)
    return -0.5 * ((white ** 2).sum(axis=1) + logdet + dist.k * np.log(2.0 * np.pi))


@log_density.register
def _(dist: CauchyPrediction, y: np.ndarray) -> np.ndarray:
    y = _check_targets(dist, y)
    return stats.cauchy.logpdf(y, loc=dist.loc, scale=dist.scale).sum(axis=1)


@log_density.register
def _(dist: NonparametricDistribution, y: np.ndarray) -> np.ndarray:
    y = _check_targets(dist, y)
    return sum(_grid_log_density(dist, y[:, d], d) for d in range(dist.k))


def _grid_log_density(dist: NonparametricDistribution, y: np.ndarray, dim: int) -> np.ndarray:
    """Finite-difference density of the grid CDF, floored at eps outside the grid."""
    support = dist.support[:, :, dim]
    values = dist.cdf[:, :, dim]
    density = np.diff(values, axis=1) / np.diff(support, axis=1)
    out = np.full(dist.n, dist.eps)
    for i in range(dist.n):
        cell = np.searchsorted(support[i], y[i], side="right") - 1
        if 0 <= cell < density.shape[1]:
            out[i] = max(density[i, cell], dist.eps)
    return np.log(out)


def log_density_dim(dist: Distribution, y: np.ndarray, dim: int) -> np.ndarray:
    """Marginal log density of a single dimension, one value per sample."""
    _check_dim(dist, dim)
    y = _check_targets(dist, y)
    if isinstance(dist, GaussianPrediction):
        return stats.norm.logpdf(y[:, dim], loc=dist.mean[:, dim], scale=dist.std[:, dim])
    if isinstance(dist, CauchyPrediction):
        return stats.cauchy.logpdf(y[:, dim], loc=dist.loc[:, dim], scale=dist.scale[:, dim])
    return _grid_log_density(dist, y[:, dim], dim)


# ============================================================================
# Dispersion statistic
# ============================================================================

def spread(dist: Distribution, dim: int) -> np.ndarray:
    """
    Per-sample dispersion of one dimension: sigma for Gaussians, gamma for Cauchy,
    half the central one-sigma interval width for grid CDFs.
    """
    _check_dim(dist, dim)
    if isinstance(dist, GaussianPrediction):
        return dist.std[:, dim]
    if isinstance(dist, CauchyPrediction):
        return dist.scale[:, dim]
    lower = quantile(dist, _ONE_SIGMA_LEVELS[0], dim)
    upper = quantile(dist, _ONE_SIGMA_LEVELS[1], dim)
    return 0.5 * (upper - lower)


def location(dist: Distribution) -> np.ndarray:
    """Point estimate per sample (N, K): mean, Cauchy location or grid median."""
    if isinstance(dist, GaussianPrediction):
        return dist.mean
    if isinstance(dist, CauchyPrediction):
        return dist.loc
    return np.stack([quantile(dist, 0.5, d) for d in range(dist.k)], axis=1)


def moments(dist: Distribution) -> tuple:
    """
    Mean and variance per sample and dimension, each (N, K).

    Grid CDFs use the piecewise-uniform density implied by linear interpolation;
    Cauchy predictions have no variance and raise DataError.
    """
    if isinstance(dist, GaussianPrediction):
        return dist.mean, dist.variances
    if isinstance(dist, CauchyPrediction):
        raise DataError("the Cauchy distribution has no variance defined")
    width = np.diff(dist.support, axis=1)
    mass = np.diff(dist.cdf, axis=1)
    total = np.maximum(mass.sum(axis=1, keepdims=True), 1e-300)
    mass = mass / total
    mid = 0.5 * (dist.support[:, 1:] + dist.support[:, :-1])
    mean = (mass * mid).sum(axis=1)
    var = (mass * ((mid - mean[:, None]) ** 2 + width ** 2 / 12.0)).sum(axis=1)
    return mean, var
