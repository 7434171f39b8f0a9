"""
Shared pytest fixtures for the RegCal test suite.
"""

import numpy as np
import pytest

from regcal.config import reset_settings
from regcal.core import CalibrationDataset, GaussianPrediction
from regcal.synth import SynthConfig, generate


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test starts from default settings, whatever the shell exports."""
    for name in ("RECAL_SEED", "RECAL_LOG_LEVEL", "RECAL_GRID_SIZE", "RECAL_DEVICE"):
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def calibrated_1d(rng):
    """Correctly specified univariate Gaussian forecaster."""
    n = 4000
    mean = rng.uniform(-1.0, 1.0, size=(n, 1))
    std = rng.uniform(0.5, 1.5, size=(n, 1))
    y = mean + std * rng.standard_normal((n, 1))
    return CalibrationDataset(prediction=GaussianPrediction(mean=mean, var=std ** 2), ground_truth=y)


@pytest.fixture
def calibrated_2d(rng):
    """Correctly specified bivariate forecaster with full covariances."""
    n = 10_000
    mean = rng.normal(size=(n, 2))
    corr = rng.uniform(-0.6, 0.6, size=n)
    scale = rng.uniform(0.5, 2.0, size=(n, 2))
    cov = np.empty((n, 2, 2))
    cov[:, 0, 0] = scale[:, 0] ** 2
    cov[:, 1, 1] = scale[:, 1] ** 2
    cov[:, 0, 1] = cov[:, 1, 0] = corr * scale[:, 0] * scale[:, 1]
    y = mean + np.einsum("nij,nj->ni", np.linalg.cholesky(cov), rng.standard_normal((n, 2)))
    return CalibrationDataset(prediction=GaussianPrediction(mean=mean, cov=cov), ground_truth=y)


@pytest.fixture
def overconfident():
    """Constant miscalibration: true noise is twice the stated sigma."""
    return generate(SynthConfig(kind="gaussian_const_miscal", n=3000, seed=5, miscal=2.0))
