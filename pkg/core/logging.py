"""
Logging Bootstrap
Routes stdlib logging records into loguru sinks.
"""

import logging
import sys
from typing import Optional

from loguru import logger

from core.config import get_settings

_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level:<8} | {name}:{function}:{line} - {message}"


class InterceptHandler(logging.Handler):
    """Forward stdlib log records to loguru."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame is not None and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Install loguru sinks and intercept the stdlib root logger."""
    settings = get_settings()
    level = (level or settings.log_level).upper()
    log_file = settings.log_file if log_file is None else log_file

    logger.remove()
    logger.add(sys.stderr, level=level, format=_FORMAT)
    if log_file:
        logger.add(log_file, level=level, format=_FORMAT, rotation="10 MB", retention=5)

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
