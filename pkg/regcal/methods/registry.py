"""
RegCal - Method Registry
Dispatch from method tags to fit, apply and persistence of each calibrator
"""

from typing import Any, Callable, Dict, NamedTuple, Optional, Union

from ..core import CalibrationDataset, Distribution, GaussianPrediction
from ..errors import DataError
from ..gp import GPCalibrator, SVGPConfig
from . import gp_methods
from .isotonic import IsotonicCalibrator, isotonic_apply, isotonic_fit
from .variance_scaling import VarianceScaler, variance_scaling_apply, variance_scaling_fit

Calibrator = Union[IsotonicCalibrator, VarianceScaler, GPCalibrator]


class MethodSpec(NamedTuple):
    fit: Callable[[CalibrationDataset, SVGPConfig], Calibrator]
    apply: Callable[..., Distribution]
    is_gp: bool


def _isotonic_apply(calibrator, prediction, mc_samples=None, seed=None, grid_size=None):
    return isotonic_apply(calibrator, prediction, grid_size)


def _var_scaling_apply(calibrator, prediction, mc_samples=None, seed=None, grid_size=None):
    return variance_scaling_apply(calibrator, prediction)


def _gp(apply_fn):
    def apply(calibrator, prediction, mc_samples=None, seed=None, grid_size=None):
        return apply_fn(calibrator, prediction, mc_samples=mc_samples, seed=seed)
    return apply


def _gp_beta(calibrator, prediction, mc_samples=None, seed=None, grid_size=None):
    return gp_methods.gp_beta_apply(calibrator, prediction, mc_samples, seed, grid_size)


METHODS: Dict[str, MethodSpec] = {
    "isotonic": MethodSpec(lambda ds, cfg: isotonic_fit(ds), _isotonic_apply, False),
    "var-scaling": MethodSpec(lambda ds, cfg: variance_scaling_fit(ds), _var_scaling_apply, False),
    "gp-beta": MethodSpec(gp_methods.gp_beta_fit, _gp_beta, True),
    "gp-normal": MethodSpec(gp_methods.gp_normal_fit, _gp(gp_methods.gp_normal_apply), True),
    "gp-normal-mv": MethodSpec(gp_methods.gp_normal_mv_fit, _gp(gp_methods.gp_normal_mv_apply), True),
    "gp-cauchy": MethodSpec(gp_methods.gp_cauchy_fit, _gp(gp_methods.gp_cauchy_apply), True),
    "gp-cov-est": MethodSpec(gp_methods.gp_cov_est_fit, _gp(gp_methods.covariance_head_apply), True),
    "gp-cov-recal": MethodSpec(gp_methods.gp_cov_recal_fit, _gp(gp_methods.covariance_head_apply), True),
}


def method_spec(method: str) -> MethodSpec:
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return METHODS[method]


def fit_calibrator(method: str, dataset: CalibrationDataset,
                   config: Optional[SVGPConfig] = None) -> Calibrator:
    """Fit the calibrator named by a method tag."""
    return method_spec(method).fit(dataset, config or SVGPConfig())


def apply_calibrator(method: str, calibrator: Calibrator, prediction: GaussianPrediction,
                     mc_samples: Optional[int] = None, seed: Optional[int] = None,
                     grid_size: Optional[int] = None) -> Distribution:
    """Recalibrate a batch of predictions with a fitted calibrator."""
    return method_spec(method).apply(calibrator, prediction, mc_samples=mc_samples,
                                     seed=seed, grid_size=grid_size)


def calibrator_payload(calibrator: Calibrator) -> Dict[str, Any]:
    return calibrator.to_payload()


def load_calibrator(method: str, payload: Dict[str, Any],
                    config: Optional[SVGPConfig] = None) -> Calibrator:
    """Rebuild a calibrator from its serialised payload."""
    spec = method_spec(method)
    try:
        if spec.is_gp:
            return GPCalibrator.from_payload(payload, config or SVGPConfig())
        if method == "isotonic":
            return IsotonicCalibrator.from_payload(payload)
        return VarianceScaler.from_payload(payload)
    except KeyError as exc:
        raise DataError(f"model payload is missing {exc}") from exc
