"""
RegCal - Synthetic Data
Seeded generators of miscalibrated probabilistic regression datasets
"""

import logging
from typing import Callable, Dict, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from ..core import CalibrationDataset, GaussianPrediction
from ..errors import DataError

logger = logging.getLogger(__name__)

SynthKind = Literal[
    "cosine",
    "gaussian_const_miscal",
    "cauchy_noise",
    "correlated_mv",
    "mean_dependent_miscal",
]


class SynthConfig(BaseModel):
    """
    Generator selection and parameters.

    miscal is the factor c applied to the stated or true noise scale, rho the
    residual correlation of correlated_mv and k the output dimension.
    """
    kind: SynthKind = "cosine"
    n: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0)
    miscal: float = Field(default=1.0, gt=0.0)
    rho: float = Field(default=0.0, gt=-1.0, lt=1.0)
    k: int = Field(default=1, ge=1)

    @field_validator("kind", mode="before")
    @classmethod
    def _normalise_kind(cls, value: str) -> str:
        return value.replace("-", "_") if isinstance(value, str) else value

    @model_validator(mode="after")
    def _dimension(self) -> "SynthConfig":
        if self.kind == "correlated_mv":
            if self.k < 2:
                self.k = 2
            if self.rho <= -1.0 / (self.k - 1):
                raise ValueError(f"rho={self.rho} gives no valid correlation matrix for K={self.k}")
        elif self.kind in ("cosine", "mean_dependent_miscal"):
            self.k = 1
        return self


def cosine_noise_std(x: np.ndarray) -> np.ndarray:
    """Noise level rising from 0.05 at the cosine minimum to 0.5 at its maximum."""
    return 0.05 + 0.45 * (1.0 + np.cos(x)) / 2.0


def gen_cosine(config: SynthConfig) -> CalibrationDataset:
    """
    y = cos(x) + s(x) eps with x ~ U[0, 2 pi]; predictions state mean cos(x) and
    standard deviation c s(x), so c > 1 is overdispersed and c < 1 overconfident.
    """
    rng = np.random.default_rng(config.seed)
    x = rng.uniform(0.0, 2.0 * np.pi, size=config.n)
    s = cosine_noise_std(x)
    y = np.cos(x) + s * rng.standard_normal(config.n)
    prediction = GaussianPrediction(mean=np.cos(x)[:, None], var=((config.miscal * s) ** 2)[:, None])
    return CalibrationDataset(prediction=prediction, ground_truth=y[:, None])


def _base_predictions(rng: np.random.Generator, n: int, k: int):
    mean = rng.uniform(-1.0, 1.0, size=(n, k))
    std = rng.uniform(0.5, 1.5, size=(n, k))
    return mean, std


def gen_gaussian_const_miscal(config: SynthConfig) -> CalibrationDataset:
    """Stated sigma, true noise c sigma: the optimal variance weight is c^2."""
    rng = np.random.default_rng(config.seed)
    mean, std = _base_predictions(rng, config.n, config.k)
    y = mean + config.miscal * std * rng.standard_normal((config.n, config.k))
    return CalibrationDataset(prediction=GaussianPrediction(mean=mean, var=std ** 2), ground_truth=y)


def gen_cauchy_noise(config: SynthConfig) -> CalibrationDataset:
    """Gaussian predictions, Cauchy residuals with scale c sigma."""
    rng = np.random.default_rng(config.seed)
    mean, std = _base_predictions(rng, config.n, config.k)
    y = mean + config.miscal * std * rng.standard_cauchy((config.n, config.k))
    return CalibrationDataset(prediction=GaussianPrediction(mean=mean, var=std ** 2), ground_truth=y)


def gen_correlated_mv(config: SynthConfig) -> CalibrationDataset:
    """
    Residuals with equicorrelation rho and per-sample standard deviations;
    predictions carry only the (correct) diagonal variances.
    """
    if not -1.0 < config.rho < 1.0:
        raise DataError("|rho| must be below 1")
    rng = np.random.default_rng(config.seed)
    mean, std = _base_predictions(rng, config.n, config.k)
    corr = np.full((config.k, config.k), config.rho)
    np.fill_diagonal(corr, 1.0)
    white = rng.standard_normal((config.n, config.k)) @ np.linalg.cholesky(corr).T
    y = mean + std * white
    return CalibrationDataset(prediction=GaussianPrediction(mean=mean, var=std ** 2), ground_truth=y)


def mean_dependent_factor(mean: np.ndarray, miscal: float) -> np.ndarray:
    """True-to-stated noise ratio c^(mu / 2), spanning 1/c to c over mu in [-2, 2]."""
    return miscal ** (mean / 2.0)


def gen_mean_dependent_miscal(config: SynthConfig) -> CalibrationDataset:
    """
    Miscalibration that varies with the predicted mean: mu ~ U[-2, 2], stated
    sigma ~ U[0.5, 1], true noise sigma * c^(mu / 2). No single global variance
    weight can fit it.
    """
    rng = np.random.default_rng(config.seed)
    mean = rng.uniform(-2.0, 2.0, size=config.n)
    std = rng.uniform(0.5, 1.0, size=config.n)
    noise = std * mean_dependent_factor(mean, config.miscal)
    y = mean + noise * rng.standard_normal(config.n)
    prediction = GaussianPrediction(mean=mean[:, None], var=(std ** 2)[:, None])
    return CalibrationDataset(prediction=prediction, ground_truth=y[:, None])


GENERATORS: Dict[str, Callable[[SynthConfig], CalibrationDataset]] = {
    "cosine": gen_cosine,
    "gaussian_const_miscal": gen_gaussian_const_miscal,
    "cauchy_noise": gen_cauchy_noise,
    "correlated_mv": gen_correlated_mv,
    "mean_dependent_miscal": gen_mean_dependent_miscal,
}


def generate(config: SynthConfig) -> CalibrationDataset:
    """Run the generator selected by config.kind."""
    dataset = GENERATORS[config.kind](config)
    logger.info("Generated %s: n=%d, K=%d, seed=%d", config.kind, dataset.n, dataset.k, config.seed)
    return dataset
