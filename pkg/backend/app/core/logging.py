"""
Logging setup for SyntaxNMT
Plain-text logging by default, JSON records when LOG_JSON is set
"""

import logging
from typing import Optional

from pythonjsonlogger import jsonlogger

from backend.app.core.config import settings


def setup_logging(level: Optional[str] = None, json_format: Optional[bool] = None) -> None:
    """
    Configure the root logger from settings.

    Args:
        level: Override for settings.LOG_LEVEL
        json_format: Override for settings.LOG_JSON
    """
    level_name = (level or settings.LOG_LEVEL).upper()
    use_json = settings.LOG_JSON if json_format is None else json_format

    handler: logging.Handler
    if settings.LOG_FILE:
        handler = logging.FileHandler(settings.LOG_FILE, encoding="utf-8")
    else:
        handler = logging.StreamHandler()

    if use_json:
        handler.setFormatter(jsonlogger.JsonFormatter(settings.LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(settings.LOG_FORMAT))

    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        handlers=[handler],
        force=True
    )
