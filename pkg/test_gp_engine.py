"""
Tests for the distribution kernel and the sparse variational GP engine:
KL and marginals, ELBO gradients, training determinism and posterior draws.
"""

import json

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from regcal.core import CalibrationDataset, GaussianPrediction
from regcal.errors import DataError, NotFittedError, TrainingDivergedError
from regcal.gp import (
    GPCalibrator,
    InputNormaliser,
    SparseGP,
    SVGPConfig,
    elbo_mc,
    fit_svgp,
    gram,
    posterior_weights,
    song_kernel,
    song_kernel_diag,
    song_kernel_matrix,
)
from regcal.methods.heads import make_head
from regcal.synth import SynthConfig, generate

SMALL = dict(inducing=10, epochs=3, lr=0.01, mc_samples=8, batch_size=64, seed=3)


def _t(values):
    return torch.as_tensor(np.asarray(values, dtype=float), dtype=torch.float64)


def _small_dataset(n=5, seed=3):
    rng = np.random.default_rng(seed)
    mean = rng.normal(size=(n, 1))
    var = rng.uniform(0.5, 1.5, size=(n, 1))
    y = mean + np.sqrt(var) * rng.standard_normal((n, 1))
    return CalibrationDataset(prediction=GaussianPrediction(mean=mean, var=var), ground_truth=y)


# ============================================================================
# Kernel
# ============================================================================

def test_kernel_of_identical_point_masses_is_one():
    assert song_kernel([0.3, -1.0], [0.0, 0.0], [0.3, -1.0], [0.0, 0.0], 0.7) == pytest.approx(1.0)


def test_kernel_shrinks_with_input_uncertainty():
    sharp = song_kernel([0.0], [0.01], [0.0], [0.01], 1.0)
    vague = song_kernel([0.0], [2.0], [0.0], [2.0], 1.0)
    assert 0 < vague < sharp <= 1.0


def test_kernel_accepts_full_covariances():
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    value = song_kernel([0.0, 1.0], cov, [0.5, 0.0], np.diag(cov), 1.2)
    assert 0.0 < value < 1.0


def test_kernel_rejects_bad_lengthscale():
    with pytest.raises(DataError):
        song_kernel([0.0], [1.0], [0.0], [1.0], 0.0)


def test_batched_kernel_matches_reference(rng):
    mean_a, var_a = rng.normal(size=(4, 2)), rng.uniform(0.1, 1.0, size=(4, 2))
    mean_b, var_b = rng.normal(size=(3, 2)), rng.uniform(0.1, 1.0, size=(3, 2))
    batched = song_kernel_matrix(_t(mean_a), _t(var_a), _t(mean_b), _t(var_b), _t(0.8)).numpy()
    for i in range(4):
        for j in range(3):
            assert batched[i, j] == pytest.approx(song_kernel(mean_a[i], var_a[i], mean_b[j], var_b[j], 0.8))


def test_kernel_diagonal_matches_matrix(rng):
    mean, var = _t(rng.normal(size=(6, 3))), _t(rng.uniform(0.1, 1.0, size=(6, 3)))
    full = song_kernel_matrix(mean, var, mean, var, _t(1.3))
    torch.testing.assert_close(song_kernel_diag(var, _t(1.3)), torch.diagonal(full))


def test_gram_handles_duplicate_inputs():
    mean = _t([[0.0], [0.0], [1.0]])
    var = _t([[0.1], [0.1], [0.1]])
    matrix, chol = gram(mean, var, _t(1.0))
    torch.testing.assert_close(chol @ chol.T, matrix)


# ============================================================================
# Variational posterior
# ============================================================================

def _model(latent_dim=3, m=3, seed=0):
    rng = np.random.default_rng(seed)
    generator = torch.Generator().manual_seed(seed)
    return SparseGP(
        inducing_mean=rng.normal(size=(m, 1)),
        inducing_var=rng.uniform(0.2, 0.8, size=(m, 1)),
        latent_dim=latent_dim,
        generator=generator,
    )


def test_kl_is_zero_at_prior():
    assert float(_model().kl()) == pytest.approx(0.0, abs=1e-12)


def test_kl_matches_torch_distributions():
    model = _model()
    generator = torch.Generator().manual_seed(1)
    with torch.no_grad():
        model.q_mu.normal_(generator=generator)
        model.q_sqrt_lower.normal_(generator=generator)
        model.q_sqrt_log_diag.uniform_(-0.5, 0.5, generator=generator)
    mu = model.q_mu.detach().reshape(-1)
    q = torch.distributions.MultivariateNormal(mu, scale_tril=model.q_sqrt().detach())
    p = torch.distributions.MultivariateNormal(torch.zeros_like(mu), scale_tril=torch.eye(mu.numel(), dtype=mu.dtype))
    assert float(model.kl()) == pytest.approx(float(torch.distributions.kl_divergence(q, p)), rel=1e-10)


def test_marginals_at_prior_equal_prior_covariance(rng):
    model = _model()
    mean, var = _t(rng.normal(size=(7, 1))), _t(rng.uniform(0.1, 1.0, size=(7, 1)))
    with torch.no_grad():
        f_mean, f_cov = model.marginals(mean, var)
        expected = song_kernel_diag(var, model.lengthscale)[:, None, None] * model.coregionalization.matrix()
    torch.testing.assert_close(f_mean, torch.zeros_like(f_mean))
    torch.testing.assert_close(f_cov, expected, rtol=1e-6, atol=1e-8)


def test_coregionalization_is_positive_definite():
    coreg = _model(latent_dim=4).coregionalization
    eigval = torch.linalg.eigvalsh(coreg.matrix().detach())
    # A A^T is PSD and lambda starts at 1
    assert float(eigval.min()) >= 1.0


# ============================================================================
# ELBO
# ============================================================================

def test_elbo_gradients_match_finite_differences():
    """Autograd against central differences with common random numbers."""
    ds = _small_dataset(n=5)
    head = make_head("beta")
    ctx = head.context(ds, {})
    mean_np, var_np = InputNormaliser.fit(ds.prediction).transform(ds.prediction)
    inputs = (_t(mean_np), _t(var_np))

    model = _model(latent_dim=head.latent_dim(1), m=3, seed=4)
    generator = torch.Generator().manual_seed(5)
    with torch.no_grad():
        for param in model.parameters():
            param.add_(0.1 * torch.randn(param.shape, generator=generator, dtype=param.dtype))

    def objective():
        return elbo_mc(model, inputs, lambda f: head.log_likelihood(f, ctx), mc_samples=5, seed=17)

    model.zero_grad()
    objective().backward()
    h = 1e-6
    for name, param in model.named_parameters():
        analytic = param.grad.detach().clone().reshape(-1)
        flat = param.data.view(-1)
        for j in range(flat.numel()):
            with torch.no_grad():
                original = float(flat[j])
                flat[j] = original + h
                up = float(objective())
                flat[j] = original - h
                down = float(objective())
                flat[j] = original
            numeric = (up - down) / (2 * h)
            assert abs(numeric - float(analytic[j])) <= 1e-4 * max(abs(float(analytic[j])), 1e-2), (name, j)


def test_elbo_same_seed_same_value():
    ds = _small_dataset(n=8)
    head = make_head("normal")
    ctx = head.context(ds, {})
    mean_np, var_np = InputNormaliser.fit(ds.prediction).transform(ds.prediction)
    model = _model(latent_dim=1)
    args = (model, (_t(mean_np), _t(var_np)), lambda f: head.log_likelihood(f, ctx), 16)
    assert float(elbo_mc(*args, seed=9)) == float(elbo_mc(*args, seed=9))


def test_elbo_empty_batch():
    model = _model(latent_dim=1)
    with pytest.raises(DataError):
        elbo_mc(model, (torch.zeros(0, 1, dtype=torch.float64),) * 2, lambda f: f.sum(-1), 4, seed=0)


# ============================================================================
# Training
# ============================================================================

def test_svgp_config_validation():
    with pytest.raises(ValidationError):
        SVGPConfig(inducing=0)
    with pytest.raises(ValidationError):
        SVGPConfig(lr=-1.0)


def test_fit_is_deterministic(overconfident):
    data = overconfident.subset(np.arange(300))
    first = fit_svgp(data, make_head("normal"), SVGPConfig(**SMALL))
    second = fit_svgp(data, make_head("normal"), SVGPConfig(**SMALL))
    assert json.dumps(first.to_payload()) == json.dumps(second.to_payload())
    assert len(first.history) == SMALL["epochs"]


def test_fit_improves_elbo(overconfident):
    config = SVGPConfig(inducing=20, epochs=15, lr=0.05, mc_samples=16, batch_size=256, seed=0)
    calibrator = fit_svgp(overconfident.subset(np.arange(1000)), make_head("normal"), config)
    assert np.mean(calibrator.history[-3:]) > calibrator.history[0]


def test_inducing_points_capped_by_dataset_size():
    calibrator = fit_svgp(_small_dataset(n=6), make_head("normal"), SVGPConfig(**SMALL))
    assert calibrator.model.num_inducing == 6


class _BrokenHead:
    tag = "broken"

    def latent_dim(self, k):
        return k

    def context(self, dataset, extras):
        return {"residual": torch.as_tensor(dataset.residuals, dtype=torch.float64)}

    def log_likelihood(self, f, ctx):
        return (f * float("nan")).sum(-1)


def test_divergence_keeps_last_valid_calibrator():
    with pytest.raises(TrainingDivergedError) as info:
        fit_svgp(_small_dataset(n=20), _BrokenHead(), SVGPConfig(**SMALL))
    assert info.value.epoch == 1
    assert isinstance(info.value.calibrator, GPCalibrator)
    assert info.value.calibrator.history == []


# ============================================================================
# Posterior draws
# ============================================================================

@pytest.fixture(scope="module")
def trained():
    data = generate(SynthConfig(kind="gaussian_const_miscal", n=400, seed=2, miscal=2.0))
    return data, fit_svgp(data, make_head("normal"), SVGPConfig(**SMALL))


def test_posterior_draws_shape_and_determinism(trained):
    data, calibrator = trained
    first = posterior_weights(calibrator, data.prediction, mc_samples=6, seed=1)
    second = posterior_weights(calibrator, data.prediction, mc_samples=6, seed=1)
    assert first.shape == (6, data.n, 1)
    np.testing.assert_array_equal(first, second)


def test_posterior_draws_independent_of_request_size(trained):
    data, calibrator = trained
    full = posterior_weights(calibrator, data.prediction, mc_samples=4, seed=1)
    head = posterior_weights(calibrator, data.prediction.subset(np.arange(10)), mc_samples=4, seed=1)
    np.testing.assert_allclose(head, full[:, :10], rtol=1e-10, atol=1e-10)


def test_payload_round_trip_reproduces_draws(trained):
    data, calibrator = trained
    payload = json.loads(json.dumps(calibrator.to_payload()))
    restored = GPCalibrator.from_payload(payload, calibrator.config)
    np.testing.assert_allclose(
        posterior_weights(restored, data.prediction, mc_samples=3, seed=0),
        posterior_weights(calibrator, data.prediction, mc_samples=3, seed=0),
    )


def test_posterior_needs_fitted_model(trained):
    data, _ = trained
    with pytest.raises(NotFittedError):
        posterior_weights(None, data.prediction, mc_samples=2, seed=0)


def test_posterior_dimension_mismatch(trained):
    _, calibrator = trained
    pred = GaussianPrediction(mean=np.zeros((2, 2)), var=np.ones((2, 2)))
    with pytest.raises(DataError, match="K=1"):
        posterior_weights(calibrator, pred, mc_samples=2, seed=0)


def test_malformed_payload(trained):
    _, calibrator = trained
    payload = calibrator.to_payload()
    del payload["state"]
    with pytest.raises(DataError, match="malformed"):
        GPCalibrator.from_payload(payload, calibrator.config)


def test_normaliser_handles_constant_means():
    pred = GaussianPrediction(mean=np.ones((4, 1)), var=np.full((4, 1), 4.0))
    normaliser = InputNormaliser.fit(pred)
    assert normaliser.scale[0] == pytest.approx(2.0)
    mean, var = normaliser.transform(pred)
    np.testing.assert_allclose(mean, 0.0)
    np.testing.assert_allclose(var, 1.0)
