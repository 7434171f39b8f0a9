"""
RegCal - Logging Setup
"""

import logging
from typing import Optional

from .config import get_settings

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once for command-line use."""
    level = (level or get_settings().log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)
    # torch is chatty at DEBUG
    logging.getLogger("torch").setLevel(logging.WARNING)
