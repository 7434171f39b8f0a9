"""
RegCal - Sparse Variational Gaussian Process
Coregionalised multi-output SVGP over distribution-valued inputs, trained by
Monte-Carlo ELBO ascent
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field
from torch import nn
from torch.nn import functional as F

from ..config import get_settings
from ..core import CalibrationDataset, GaussianPrediction
from ..errors import DataError, NotFittedError, NumericalError, TrainingDivergedError
from .kernel import gram, song_kernel_diag, song_kernel_matrix

logger = logging.getLogger(__name__)

DTYPE = torch.float64
MIN_COREG_DIAG = 1e-6
OUTPUT_JITTER = 1e-8
ELBO_WINDOW = 10
APPLY_CHUNK = 1024

LikelihoodFn = Callable[[torch.Tensor], torch.Tensor]


def _inv_softplus(value: float) -> float:
    return math.log(math.expm1(value))


# ============================================================================
# Configuration
# ============================================================================

class SVGPConfig(BaseModel):
    """Training hyperparameters; model_dump() is the stored config snapshot."""
    inducing: int = Field(default=50, ge=1)
    epochs: int = Field(default=200, ge=1)
    lr: float = Field(default=0.01, gt=0)
    mc_samples: int = Field(default=128, ge=1)
    batch_size: int = Field(default=256, ge=1)
    seed: int = Field(default=0, ge=0)
    rank: Optional[int] = Field(default=None, ge=1)
    lengthscale: float = Field(default=1.0, gt=0)
    jitter: float = Field(default=1e-6, gt=0)


class Likelihood(Protocol):
    """What the engine needs from a recalibration head."""

    tag: str

    def latent_dim(self, k: int) -> int: ...

    def context(self, dataset: CalibrationDataset,
                extras: Dict[str, Any]) -> Dict[str, torch.Tensor]: ...

    def log_likelihood(self, f: torch.Tensor, ctx: Dict[str, torch.Tensor]) -> torch.Tensor: ...


# ============================================================================
# Input normalisation
# ============================================================================

@dataclass(frozen=True)
class InputNormaliser:
    """Per-dimension affine standardisation of kernel inputs."""
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, prediction: GaussianPrediction) -> "InputNormaliser":
        shift = prediction.mean.mean(axis=0)
        scale = prediction.mean.std(axis=0)
        # constant means: fall back to the typical predicted spread
        fallback = np.sqrt(prediction.variances.mean(axis=0))
        scale = np.where(scale > 1e-12, scale, fallback)
        return cls(shift=shift, scale=np.where(scale > 1e-12, scale, 1.0))

    def transform(self, prediction: GaussianPrediction) -> Tuple[np.ndarray, np.ndarray]:
        mean = (prediction.mean - self.shift) / self.scale
        var = prediction.variances / self.scale ** 2
        return mean, var

    def to_payload(self) -> Dict[str, Any]:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "InputNormaliser":
        return cls(shift=np.asarray(payload["shift"], dtype=float),
                   scale=np.asarray(payload["scale"], dtype=float))


# ============================================================================
# Model
# ============================================================================

class Coregionalization(nn.Module):
    """B = A A^T + diag(lambda) with A lower (P x R) and lambda >= 1e-6."""

    def __init__(self, latent_dim: int, rank: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        init = 0.1 * torch.randn(latent_dim, rank, generator=generator, dtype=DTYPE)
        self.factor = nn.Parameter(torch.tril(init))
        self.raw_diag = nn.Parameter(torch.full((latent_dim,), _inv_softplus(1.0), dtype=DTYPE))

    @property
    def diag(self) -> torch.Tensor:
        return F.softplus(self.raw_diag) + MIN_COREG_DIAG

    def matrix(self) -> torch.Tensor:
        factor = torch.tril(self.factor)
        return factor @ factor.T + torch.diag(self.diag)


class SparseGP(nn.Module):
    """
    Whitened SVGP with P coregionalised latent outputs.

    Inducing inputs are themselves diagonal Gaussians (mean, variance). The
    variational posterior q(v) = N(m, S S^T) lives on the whitened inducing values
    v = chol(B kron Kzz)^-1 u, so the prior is q = N(0, I).
    """

    def __init__(self, inducing_mean: np.ndarray, inducing_var: np.ndarray, latent_dim: int,
                 rank: Optional[int] = None, lengthscale: float = 1.0, jitter: float = 1e-6,
                 generator: Optional[torch.Generator] = None):
        super().__init__()
        m = inducing_mean.shape[0]
        size = m * latent_dim
        self.latent_dim = latent_dim
        self.rank = rank or latent_dim
        self.jitter = jitter

        self.inducing_mean = nn.Parameter(torch.as_tensor(inducing_mean, dtype=DTYPE).clone())
        self.inducing_log_var = nn.Parameter(torch.log(torch.as_tensor(inducing_var, dtype=DTYPE)))
        self.raw_lengthscale = nn.Parameter(torch.tensor(_inv_softplus(lengthscale), dtype=DTYPE))
        self.coregionalization = Coregionalization(latent_dim, self.rank, generator)

        self.q_mu = nn.Parameter(torch.zeros(latent_dim, m, dtype=DTYPE))
        self.q_sqrt_lower = nn.Parameter(torch.zeros(size, size, dtype=DTYPE))
        self.q_sqrt_log_diag = nn.Parameter(torch.zeros(size, dtype=DTYPE))

    @property
    def num_inducing(self) -> int:
        return self.inducing_mean.shape[0]

    @property
    def lengthscale(self) -> torch.Tensor:
        return F.softplus(self.raw_lengthscale)

    def q_sqrt(self) -> torch.Tensor:
        return torch.tril(self.q_sqrt_lower, diagonal=-1) + torch.diag(torch.exp(self.q_sqrt_log_diag))

    def kl(self) -> torch.Tensor:
        """KL(q(v) || N(0, I)) in closed form."""
        size = self.q_sqrt_log_diag.numel()
        return 0.5 * (
            (self.q_sqrt() ** 2).sum()
            + (self.q_mu ** 2).sum()
            - size
            - 2.0 * self.q_sqrt_log_diag.sum()
        )

    def marginals(self, mean: torch.Tensor, var: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Marginal posterior of the P latents at each input.

        Returns:
            (N, P) means and (N, P, P) covariances
        """
        theta = self.lengthscale
        z_var = torch.exp(self.inducing_log_var)
        _, chol_z = gram(self.inducing_mean, z_var, theta, self.jitter)

        k_xz = song_kernel_matrix(mean, var, self.inducing_mean, z_var, theta)
        proj = torch.linalg.solve_triangular(chol_z, k_xz.T, upper=False).T
        k_xx = song_kernel_diag(var, theta)

        coreg = self.coregionalization.matrix()
        chol_b = torch.linalg.cholesky(coreg)

        f_mean = (proj @ self.q_mu.T) @ chol_b.T
        s3 = self.q_sqrt().reshape(self.latent_dim, self.num_inducing, -1)
        ws = torch.einsum("pq,nqc->npc", chol_b, torch.einsum("nj,qjc->nqc", proj, s3))
        residual = torch.clamp(k_xx - (proj ** 2).sum(-1), min=0.0)
        f_cov = residual[:, None, None] * coreg + ws @ ws.transpose(-1, -2)
        return f_mean, f_cov

    def sample(self, mean: torch.Tensor, var: torch.Tensor, mc_samples: int,
               generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """Reparameterised draws of the latents, shape (S, N, P)."""
        f_mean, f_cov = self.marginals(mean, var)
        chol = _output_cholesky(f_cov)
        eps = torch.randn(mc_samples, *f_mean.shape, generator=generator, dtype=DTYPE)
        return f_mean + torch.einsum("npq,snq->snp", chol, eps.to(f_mean.device))


def _output_cholesky(f_cov: torch.Tensor) -> torch.Tensor:
    eye = torch.eye(f_cov.shape[-1], dtype=f_cov.dtype, device=f_cov.device)
    chol, info = torch.linalg.cholesky_ex(f_cov + OUTPUT_JITTER * eye)
    if bool((info != 0).any()):
        bad = int(torch.nonzero(info)[0])
        raise NumericalError(f"posterior covariance of sample {bad} is not positive definite")
    return chol


# ============================================================================
# Calibrator
# ============================================================================

@dataclass
class GPCalibrator:
    """
    Fitted sparse GP together with everything needed to apply it.

    Attributes:
        model: trained SparseGP
        head: head tag (beta, normal, cauchy, normal_mv, covariance)
        k: output dimension of the calibrated predictions
        normaliser: kernel input standardisation
        config: training config snapshot
        history: per-epoch ELBO
        extras: head-specific fitted state (e.g. correlation template)
    """
    model: SparseGP
    head: str
    k: int
    normaliser: InputNormaliser
    config: SVGPConfig
    history: List[float] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def latent_dim(self) -> int:
        return self.model.latent_dim

    def inputs(self, prediction: GaussianPrediction) -> Tuple[torch.Tensor, torch.Tensor]:
        if prediction.k != self.k:
            raise DataError(f"calibrator has K={self.k}, prediction has K={prediction.k}")
        mean, var = self.normaliser.transform(prediction)
        return torch.as_tensor(mean, dtype=DTYPE), torch.as_tensor(var, dtype=DTYPE)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "head": self.head,
            "k": self.k,
            "latent_dim": self.latent_dim,
            "num_inducing": self.model.num_inducing,
            "rank": self.model.rank,
            "normaliser": self.normaliser.to_payload(),
            "state": {name: value.detach().cpu().tolist()
                      for name, value in self.model.state_dict().items()},
            "history": list(self.history),
            "extras": self.extras,
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any], config: SVGPConfig) -> "GPCalibrator":
        try:
            k, m = int(payload["k"]), int(payload["num_inducing"])
            model = SparseGP(
                inducing_mean=np.zeros((m, k)),
                inducing_var=np.ones((m, k)),
                latent_dim=int(payload["latent_dim"]),
                rank=int(payload["rank"]),
                jitter=config.jitter,
            )
            state = {name: torch.as_tensor(value, dtype=DTYPE)
                     for name, value in payload["state"].items()}
            model.load_state_dict(state)
        except (KeyError, TypeError, RuntimeError) as exc:
            raise DataError(f"malformed GP model payload: {exc}") from exc
        return cls(
            model=model,
            head=payload["head"],
            k=k,
            normaliser=InputNormaliser.from_payload(payload["normaliser"]),
            config=config,
            history=list(payload.get("history", [])),
            extras=dict(payload.get("extras", {})),
        )


# ============================================================================
# Training
# ============================================================================

def elbo_mc(model: SparseGP, inputs: Tuple[torch.Tensor, torch.Tensor],
            likelihood_fn: LikelihoodFn, mc_samples: int, seed: Optional[int] = None,
            generator: Optional[torch.Generator] = None,
            n_total: Optional[int] = None) -> torch.Tensor:
    """
    Monte-Carlo evidence lower bound N/|batch| * sum E_q[log p(y | f)] - KL(q || p).

    Args:
        model: sparse GP with current variational parameters
        inputs: (mean, var) kernel inputs of the batch, each (B, K)
        likelihood_fn: maps latent draws (S, B, P) to log likelihoods (S, B)
        mc_samples: number of reparameterised draws S
        seed: seeds a fresh generator when no generator is given
        generator: torch random generator for common random numbers
        n_total: dataset size used to rescale the batch sum (defaults to B)

    Returns:
        Scalar ELBO tensor carrying gradients
    """
    mean, var = inputs
    batch = mean.shape[0]
    if batch == 0:
        raise DataError("cannot evaluate the ELBO on an empty batch")
    if generator is None:
        generator = torch.Generator().manual_seed(seed if seed is not None else get_settings().seed)

    f = model.sample(mean, var, mc_samples, generator)
    loglik = likelihood_fn(f)
    finite = torch.isfinite(loglik)
    if not bool(finite.all()):
        bad = int(torch.nonzero(~finite.all(dim=0))[0])
        raise NumericalError(f"non-finite likelihood at batch sample {bad}")

    scale = (n_total or batch) / batch
    return scale * loglik.mean(dim=0).sum() - model.kl()


def _restored(model: SparseGP, state: Dict[str, torch.Tensor], **kwargs) -> GPCalibrator:
    model.load_state_dict(state)
    return GPCalibrator(model=model, **kwargs)


def fit_svgp(dataset: CalibrationDataset, head: Likelihood, config: Optional[SVGPConfig] = None,
             extras: Optional[Dict[str, Any]] = None) -> GPCalibrator:
    """
    Train a sparse GP recalibration model by stochastic ELBO ascent with Adam.

    Args:
        dataset: training pairs
        head: likelihood head providing the latent count and log likelihood
        config: training hyperparameters
        extras: head-specific fitted state stored with the calibrator

    Returns:
        Trained GPCalibrator
    """
    config = config or SVGPConfig()
    extras = dict(extras or {})
    dataset.require_nonempty(1)
    device = torch.device(get_settings().device)

    rng = np.random.default_rng(config.seed)
    generator = torch.Generator().manual_seed(config.seed)

    normaliser = InputNormaliser.fit(dataset.prediction)
    mean_np, var_np = normaliser.transform(dataset.prediction)
    mean = torch.as_tensor(mean_np, dtype=DTYPE, device=device)
    var = torch.as_tensor(var_np, dtype=DTYPE, device=device)

    n = dataset.n
    chosen = np.sort(rng.choice(n, size=min(config.inducing, n), replace=False))
    model = SparseGP(
        inducing_mean=mean_np[chosen],
        inducing_var=var_np[chosen],
        latent_dim=head.latent_dim(dataset.k),
        rank=config.rank,
        lengthscale=config.lengthscale,
        jitter=config.jitter,
        generator=generator,
    ).to(device)
    ctx = {name: value.to(device) for name, value in head.context(dataset, extras).items()}

    logger.info(
        "Training GP-%s: N=%d, K=%d, P=%d, inducing=%d, epochs=%d",
        head.tag, n, dataset.k, model.latent_dim, model.num_inducing, config.epochs,
    )

    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    history: List[float] = []
    valid_state = copy.deepcopy(model.state_dict())
    meta = dict(head=head.tag, k=dataset.k, normaliser=normaliser, config=config,
                history=history, extras=extras)

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_elbo = 0.0
        for start in range(0, n, config.batch_size):
            index = torch.as_tensor(order[start:start + config.batch_size], device=device)
            batch_ctx = {name: value[index] for name, value in ctx.items()}
            optimizer.zero_grad()
            try:
                elbo = elbo_mc(
                    model, (mean[index], var[index]),
                    lambda f: head.log_likelihood(f, batch_ctx),
                    config.mc_samples, generator=generator, n_total=n,
                )
            except NumericalError as exc:
                calibrator = _restored(model, valid_state, **meta)
                raise TrainingDivergedError(
                    f"training diverged in epoch {epoch + 1}: {exc}", calibrator, epoch + 1
                ) from exc
            if not bool(torch.isfinite(elbo)):
                calibrator = _restored(model, valid_state, **meta)
                raise TrainingDivergedError(
                    f"non-finite ELBO in epoch {epoch + 1}", calibrator, epoch + 1
                )
            (-elbo).backward()
            optimizer.step()
            epoch_elbo += float(elbo.detach()) * index.numel() / n

        history.append(epoch_elbo)
        valid_state = copy.deepcopy(model.state_dict())
        logger.debug("epoch %d/%d elbo %.4f", epoch + 1, config.epochs, epoch_elbo)

    smoothed = float(np.mean(history[-ELBO_WINDOW:]))
    if smoothed < history[0]:
        logger.warning("Smoothed final ELBO %.4f is below the first-epoch ELBO %.4f",
                       smoothed, history[0])
    logger.info("GP-%s trained: ELBO %.4f -> %.4f (lengthscale %.4f)",
                head.tag, history[0], smoothed, model.lengthscale.detach().item())
    return GPCalibrator(model=model, **meta)


# ============================================================================
# Inference
# ============================================================================

def posterior_weights(calibrator: Optional[GPCalibrator], prediction: GaussianPrediction,
                      mc_samples: int, seed: int) -> np.ndarray:
    """
    Draw latent weight vectors from the marginal variational posterior.

    Sample i uses its own generator seeded with seed ^ i, so results do not depend on
    batching or on the other samples in the request.

    Returns:
        (S, N, P) latent draws (head positivity maps are applied by the caller)
    """
    if calibrator is None:
        raise NotFittedError("GP calibrator is not fitted")
    if mc_samples < 1:
        raise DataError("need at least one posterior sample")
    mean, var = calibrator.inputs(prediction)
    model = calibrator.model
    device = next(model.parameters()).device
    out = np.empty((mc_samples, prediction.n, model.latent_dim))

    with torch.no_grad():
        for start in range(0, prediction.n, APPLY_CHUNK):
            stop = min(start + APPLY_CHUNK, prediction.n)
            f_mean, f_cov = model.marginals(mean[start:stop].to(device), var[start:stop].to(device))
            chol = _output_cholesky(f_cov)
            eps = torch.stack([
                torch.randn(mc_samples, model.latent_dim, dtype=DTYPE,
                            generator=torch.Generator().manual_seed(seed ^ i))
                for i in range(start, stop)
            ], dim=1).to(device)
            draws = f_mean + torch.einsum("npq,snq->snp", chol, eps)
            out[:, start:stop] = draws.cpu().numpy()
    return out
