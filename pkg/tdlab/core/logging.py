# tdlab/core/logging.py
import logging
from typing import Optional

from tdlab.core.config import get_settings


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once for CLI use."""
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO),
        format=settings.LOG_FORMAT,
    )
