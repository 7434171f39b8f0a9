"""
RegCal - Model Files
Versioned JSON envelope around a fitted calibrator
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import BaseModel, Field, ValidationError, field_validator

from ..errors import DataError
from ..gp import SVGPConfig
from ..methods import METHODS, Calibrator, calibrator_payload, load_calibrator

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelFile(BaseModel):
    """What `fit` writes and `apply` reads."""
    format_version: int = FORMAT_VERSION
    method: str
    payload: Dict[str, Any]
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0

    @field_validator("format_version")
    @classmethod
    def _supported(cls, value: int) -> int:
        if value != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {value} (expected {FORMAT_VERSION})")
        return value

    @field_validator("method")
    @classmethod
    def _known_method(cls, value: str) -> str:
        if value not in METHODS:
            raise ValueError(f"unknown method {value!r}")
        return value

    @classmethod
    def from_calibrator(cls, method: str, calibrator: Calibrator,
                        config: SVGPConfig) -> "ModelFile":
        return cls(
            method=method,
            payload=calibrator_payload(calibrator),
            config=config.model_dump(),
            seed=config.seed,
        )

    @property
    def training_config(self) -> SVGPConfig:
        return SVGPConfig(**self.config)

    def calibrator(self) -> Calibrator:
        return load_calibrator(self.method, self.payload, self.training_config)


def save_model(path: Union[str, Path], model: ModelFile) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # sorted keys keep reruns byte-identical
    path.write_text(json.dumps(model.model_dump(), sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")
    logger.info("Saved %s model to %s", model.method, path)


def load_model(path: Union[str, Path]) -> ModelFile:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    try:
        return ModelFile.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc.msg}") from None
    except ValidationError as exc:
        first = exc.errors()[0]
        raise DataError(f"model file {path}: {first['msg']}") from None
