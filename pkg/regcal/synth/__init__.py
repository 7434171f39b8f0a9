"""
RegCal - Synthetic Data
Generators and reference oracles for demos, property checks and acceptance runs
"""

from .generators import (
    GENERATORS,
    SynthConfig,
    cosine_noise_std,
    gen_cauchy_noise,
    gen_correlated_mv,
    gen_cosine,
    gen_gaussian_const_miscal,
    gen_mean_dependent_miscal,
    generate,
    mean_dependent_factor,
)
from .oracles import (
    correlated_nll_gain,
    coverage_oracle,
    exhaustive_isotonic,
    expected_coverage,
    golden_variance_weight,
)

__all__ = [
    # Generators
    "SynthConfig",
    "GENERATORS",
    "generate",
    "gen_cosine",
    "gen_gaussian_const_miscal",
    "gen_cauchy_noise",
    "gen_correlated_mv",
    "gen_mean_dependent_miscal",
    "cosine_noise_std",
    "mean_dependent_factor",
    # Oracles
    "coverage_oracle",
    "expected_coverage",
    "correlated_nll_gain",
    "golden_variance_weight",
    "exhaustive_isotonic",
]
