"""
RegCal - GP Engine
Sparse variational Gaussian process machinery shared by the GP recalibration heads
"""

from .kernel import gram, song_kernel, song_kernel_diag, song_kernel_matrix
from .svgp import (
    Coregionalization,
    GPCalibrator,
    InputNormaliser,
    Likelihood,
    SparseGP,
    SVGPConfig,
    elbo_mc,
    fit_svgp,
    posterior_weights,
)

__all__ = [
    # Kernel
    "song_kernel",
    "song_kernel_matrix",
    "song_kernel_diag",
    "gram",
    # Model
    "SVGPConfig",
    "Coregionalization",
    "SparseGP",
    "InputNormaliser",
    "GPCalibrator",
    "Likelihood",
    # Training / inference
    "elbo_mc",
    "fit_svgp",
    "posterior_weights",
]
