"""
End-to-end calibration quality on the synthetic benchmarks.

Each test fits with default training settings on a few thousand samples,
so the module is marked slow (deselect with -m "not slow").
"""

import numpy as np
import pytest

from regcal.gp import SVGPConfig
from regcal.metrics import mean_qce, nll, reliability_curve
from regcal.methods import apply_calibrator, fit_calibrator
from regcal.synth import SynthConfig, correlated_nll_gain, generate

pytestmark = pytest.mark.slow

# correlations come from the fitted template; the GP only refines the scales
COVARIANCE_RUN = SVGPConfig(inducing=25, epochs=50, mc_samples=32)


@pytest.fixture(scope="module")
def cosine():
    return generate(SynthConfig(kind="cosine", n=8000, miscal=2.0, seed=7))


def _fit_apply(method, dataset, config=None):
    calibrator = fit_calibrator(method, dataset, config)
    return apply_calibrator(method, calibrator, dataset.prediction)


# ============================================================================
# Cosine task
# ============================================================================

def test_gp_normal_closes_the_coverage_gap(cosine):
    before = reliability_curve(cosine).calibration_gap()
    after = reliability_curve(cosine, _fit_apply("gp-normal", cosine)).calibration_gap()
    assert before > 0.10
    assert after < 0.03


def test_isotonic_quantile_calibration(cosine):
    assert mean_qce(cosine, _fit_apply("isotonic", cosine)) < 0.02


# ============================================================================
# Covariance estimation
# ============================================================================

def test_covariance_estimation_recovers_correlation():
    dataset = generate(SynthConfig(kind="correlated_mv", n=10000, rho=0.8, seed=3))
    out = _fit_apply("gp-cov-est", dataset, COVARIANCE_RUN)
    cov = out.cov
    corr = cov[:, 0, 1] / np.sqrt(cov[:, 0, 0] * cov[:, 1, 1])
    assert abs(corr.mean() - 0.8) < 0.1
    gain = nll(dataset) - nll(dataset, out)
    assert gain >= 0.2
    assert gain < correlated_nll_gain(0.8) + 0.05


# ============================================================================
# Heavy tails
# ============================================================================

def test_gp_cauchy_fits_heavy_tailed_residuals():
    dataset = generate(SynthConfig(kind="cauchy_noise", n=5000, miscal=2.0, seed=11))
    cauchy = _fit_apply("gp-cauchy", dataset)
    normal = _fit_apply("gp-normal", dataset)
    assert nll(dataset, cauchy) < nll(dataset, normal)
    assert nll(dataset, cauchy) < nll(dataset)
    weight = np.median(cauchy.scale / dataset.prediction.std)
    assert 1.7 <= weight <= 2.3


# ============================================================================
# Locality
# ============================================================================

def test_gp_normal_beats_global_scaling_on_local_miscalibration():
    dataset = generate(SynthConfig(kind="mean_dependent_miscal", n=5000, miscal=3.0, seed=13))
    local = nll(dataset, _fit_apply("gp-normal", dataset))
    global_ = nll(dataset, _fit_apply("var-scaling", dataset))
    assert local <= global_ - 0.05
