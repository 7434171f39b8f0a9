"""
RegCal - Runtime Settings
Environment-driven configuration (loaded from .env when present)
"""

import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

load_dotenv()


# ============================================================================
# Constants
# ============================================================================

# CDF clamping used by every grid/link evaluation
CDF_EPS = 1e-7

# Tail probabilities spanned by output CDF grids
GRID_TAIL = 1e-4

DEFAULT_GRID_SIZE = 512
DEFAULT_SEED = 0


# ============================================================================
# Settings
# ============================================================================

class Settings(BaseModel):
    """Process-wide settings read from the environment."""

    seed: int = DEFAULT_SEED
    log_level: str = "INFO"
    grid_size: int = Field(default=DEFAULT_GRID_SIZE, ge=8)
    device: str = "cpu"

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from RECAL_* environment variables."""
        return cls(
            seed=int(os.getenv("RECAL_SEED", str(DEFAULT_SEED))),
            log_level=os.getenv("RECAL_LOG_LEVEL", "INFO"),
            grid_size=int(os.getenv("RECAL_GRID_SIZE", str(DEFAULT_GRID_SIZE))),
            device=os.getenv("RECAL_DEVICE", "cpu"),
        )


# Global instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the global settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings.from_env()
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the environment is read again."""
    global _settings
    _settings = None
