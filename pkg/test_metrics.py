"""
Tests for scoring rules, variance and quantile calibration errors, the
multivariate consistency statistics and the evaluation report.
"""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import special, stats

from regcal.core import CalibrationDataset, CauchyPrediction, GaussianPrediction
from regcal.errors import DataError
from regcal.metrics import (
    EvalConfig,
    QuantileGrid,
    chi2_quantile,
    ence,
    equal_frequency_bins,
    evaluate,
    mean_pinball,
    mean_qce,
    nees,
    nll,
    nll_per_dim,
    parse_metric_list,
    pinball,
    qce,
    qce_map,
    reliability_curve,
    sgv,
    uce,
)
from regcal.synth import SynthConfig, expected_coverage, generate


def _single(mean, var, y):
    pred = GaussianPrediction(mean=np.array([[mean]]), var=np.array([[var]]))
    return CalibrationDataset(prediction=pred, ground_truth=np.array([[y]]))


@pytest.fixture
def large_calibrated(rng):
    n = 20_000
    mean = rng.normal(size=(n, 1))
    std = rng.uniform(0.3, 3.0, size=(n, 1))
    y = mean + std * rng.standard_normal((n, 1))
    return CalibrationDataset(prediction=GaussianPrediction(mean=mean, var=std ** 2), ground_truth=y)


# ============================================================================
# Binning and quantile grids
# ============================================================================

def test_equal_frequency_bins_cover_every_sample(rng):
    scheme = equal_frequency_bins(rng.uniform(size=1003), 20)
    assert scheme.counts.sum() == 1003
    assert scheme.counts.max() - scheme.counts.min() <= 1
    assert np.all(np.diff(scheme.edges) >= 0)


def test_bin_membership_invariant_under_rescaling(rng):
    stat = rng.uniform(0.1, 5.0, size=500)
    a = equal_frequency_bins(stat, 20)
    b = equal_frequency_bins(3.7 * stat, 20)
    np.testing.assert_array_equal(a.assignment, b.assignment)


def test_more_bins_than_samples_leaves_empty_bins():
    scheme = equal_frequency_bins(np.array([1.0, 2.0, 3.0]), 5)
    assert scheme.counts.sum() == 3
    assert (scheme.counts == 0).sum() == 2


def test_default_quantile_grid():
    grid = QuantileGrid.default()
    assert len(grid) == 19
    assert grid.levels[0] == pytest.approx(0.05)
    assert grid.levels[-1] == pytest.approx(0.95)


def test_single_level_grid():
    assert QuantileGrid.parse("0.5:0.5:0.1").levels.tolist() == [0.5]


@pytest.mark.parametrize("spec", ["0:0.5:0.1", "0.5:1.0:0.25", "0.1:0.9:0", "a,b", "0.6,0.4"])
def test_invalid_quantile_grids(spec):
    with pytest.raises(DataError):
        QuantileGrid.parse(spec)


# ============================================================================
# Scoring rules
# ============================================================================

def test_nll_of_standard_normal_at_mean():
    assert nll(_single(0.0, 1.0, 0.0)) == pytest.approx(0.5 * np.log(2 * np.pi))


def test_nll_per_dim_sums_to_joint_for_diagonal(calibrated_2d):
    diag = GaussianPrediction(mean=calibrated_2d.prediction.mean,
                              var=calibrated_2d.prediction.variances)
    ds = CalibrationDataset(prediction=diag, ground_truth=calibrated_2d.ground_truth)
    assert nll_per_dim(ds).sum() == pytest.approx(nll(ds))


def test_pinball_single_sample():
    ds = _single(0.0, 1.0, 1.0)
    assert pinball(ds, tau=0.5) == pytest.approx(0.5)
    q = stats.norm.ppf(0.9)
    assert pinball(ds, tau=0.9) == pytest.approx(0.1 * (q - 1.0))


def test_mean_pinball_matches_closed_form(large_calibrated):
    # E rho_tau(y - q_tau) = sigma * phi(Phi^-1(tau)) for a correct Gaussian
    grid = QuantileGrid.default()
    sigma = large_calibrated.prediction.std[:, 0]
    expected = np.mean([sigma.mean() * stats.norm.pdf(stats.norm.ppf(t)) for t in grid])
    assert mean_pinball(large_calibrated, levels=grid) == pytest.approx(expected, rel=0.03)


def test_pinball_rejects_bad_level(calibrated_1d):
    with pytest.raises(DataError):
        pinball(calibrated_1d, tau=1.0)


# ============================================================================
# Variance calibration
# ============================================================================

def test_uce_separates_calibrated_from_overconfident(calibrated_1d, overconfident):
    assert uce(calibrated_1d) < 0.2
    assert uce(overconfident) > 2.0


def test_ence_separates_calibrated_from_overconfident(calibrated_1d, overconfident):
    assert ence(calibrated_1d) < 0.1
    # RMSE is twice RMV in every bin
    assert ence(overconfident) == pytest.approx(1.0, abs=0.15)


def test_ence_invariant_under_output_rescaling(overconfident):
    scale = 3.0
    pred = overconfident.prediction
    rescaled = CalibrationDataset(
        prediction=GaussianPrediction(mean=scale * pred.mean, var=scale ** 2 * pred.var),
        ground_truth=scale * overconfident.ground_truth,
    )
    assert ence(rescaled) == pytest.approx(ence(overconfident), rel=1e-9)


def test_uce_undefined_for_cauchy(calibrated_1d):
    cauchy = CauchyPrediction(loc=calibrated_1d.prediction.mean, scale=calibrated_1d.prediction.std)
    with pytest.raises(DataError, match="Cauchy"):
        uce(calibrated_1d, cauchy)


def test_perfect_variance_predictions_zero_uce():
    """Squared errors exactly equal to the predicted variance."""
    var = np.linspace(0.5, 2.0, 40)[:, None]
    pred = GaussianPrediction(mean=np.zeros((40, 1)), var=var)
    ds = CalibrationDataset(prediction=pred, ground_truth=np.sqrt(var))
    assert uce(ds) == pytest.approx(0.0, abs=1e-12)
    assert ence(ds) == pytest.approx(0.0, abs=1e-12)


# ============================================================================
# Quantile calibration error
# ============================================================================

def test_chi2_quantile_one_dof_is_squared_normal():
    grid = QuantileGrid.default().levels
    expected = special.ndtri(0.5 * (1.0 + grid)) ** 2
    np.testing.assert_allclose(chi2_quantile(1, grid), expected, atol=1e-6)


def test_chi2_quantile_validation():
    with pytest.raises(DataError):
        chi2_quantile(0, 0.5)
    with pytest.raises(DataError):
        chi2_quantile(2, 1.0)


def test_nees_and_acceptance_for_consistent_forecaster(calibrated_2d):
    errors = nees(calibrated_2d.prediction, calibrated_2d.ground_truth)
    assert abs(errors.mean() - 2.0) < 0.1
    assert abs(np.mean(errors <= chi2_quantile(2, 0.9)) - 0.9) < 0.01


def test_sgv_of_diagonal_matrix():
    assert sgv(np.diag([1.0, 4.0])) == pytest.approx(2.0)
    pred = GaussianPrediction(mean=np.zeros((1, 2)), var=np.array([[1.0, 4.0]]))
    assert sgv(pred)[0] == pytest.approx(2.0)


def test_qce_small_when_calibrated(large_calibrated, calibrated_2d):
    assert mean_qce(large_calibrated) < 0.03
    assert mean_qce(calibrated_2d, multivariate=True) < 0.03


def test_qce_large_when_overdispersed():
    ds = generate(SynthConfig(kind="cosine", n=8000, seed=7, miscal=2.0))
    assert mean_qce(ds) > 0.1


def test_univariate_and_multivariate_qce_agree_for_one_dimension(calibrated_1d):
    for tau in (0.2, 0.5, 0.9):
        assert qce(calibrated_1d, tau=tau, multivariate=True) == pytest.approx(
            qce(calibrated_1d, tau=tau))


def test_qce_bounded(calibrated_1d, overconfident):
    for ds in (calibrated_1d, overconfident):
        value = qce(ds, tau=0.7)
        assert 0.0 <= value <= max(0.7, 0.3)


def test_multivariate_qce_needs_gaussian(calibrated_1d):
    cauchy = CauchyPrediction(loc=calibrated_1d.prediction.mean, scale=calibrated_1d.prediction.std)
    with pytest.raises(DataError):
        qce(calibrated_1d, cauchy, multivariate=True)


def test_qce_map_rows(calibrated_1d):
    maps = qce_map(calibrated_1d, bins=10)
    assert [m.label for m in maps] == ["0"]
    rows = maps[0].rows()
    assert len(rows) == 10
    assert sum(r[2] for r in rows) == calibrated_1d.n


def test_reliability_curve_tracks_expected_coverage():
    ds = generate(SynthConfig(kind="cosine", n=8000, seed=7, miscal=2.0))
    curve = reliability_curve(ds)
    expected = np.array([expected_coverage(2.0, t) for t in curve.levels])
    np.testing.assert_allclose(curve.coverage[:, 0], expected, atol=0.02)
    assert curve.calibration_gap() > 0.10


# ============================================================================
# Report
# ============================================================================

def test_report_keys_for_multivariate(calibrated_2d):
    report = evaluate(calibrated_2d, config=EvalConfig(bins=10))
    for name in ("nll", "pinball", "qce", "uce", "ence"):
        assert f"{name}/0" in report and f"{name}/1" in report and f"{name}/mean" in report
    assert "nll/mv" in report and "qce/mv" in report
    assert report["meta/bins"] == 10
    assert len(report["meta/levels"]) == 19


def test_report_notes_cauchy_has_no_variance(calibrated_1d):
    cauchy = CauchyPrediction(loc=calibrated_1d.prediction.mean, scale=calibrated_1d.prediction.std)
    report = evaluate(calibrated_1d, cauchy)
    assert "uce/mean" not in report and "ence/mean" not in report
    assert any("no variance" in note for note in report["meta/notes"])
    assert "nll/mean" in report


def test_report_single_level(calibrated_1d):
    report = evaluate(calibrated_1d, config=EvalConfig(levels="0.5:0.5:0.1", metrics=["qce"]))
    assert report["meta/levels"] == [0.5]
    assert set(k for k in report if not k.startswith("meta/")) == {"qce/0", "qce/mean"}


def test_unknown_metric_names():
    with pytest.raises(DataError, match="bogus"):
        parse_metric_list("nll,bogus")
    with pytest.raises(ValidationError):
        EvalConfig(metrics=["bogus"])
    assert parse_metric_list(" nll , qce ") == ["nll", "qce"]
