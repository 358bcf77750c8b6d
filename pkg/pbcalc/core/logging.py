"""
Logging configuration for the pullback calculus interpreter
"""

import logging
import sys

import structlog

from pbcalc.core.config import settings


def setup_logging(level: str | None = None, fmt: str | None = None) -> None:
    """Configure structured logging on stderr"""

    level_name = (level or settings.LOG_LEVEL).upper()
    fmt = fmt or settings.LOG_FORMAT

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level_name)),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )

    logging.basicConfig(
        level=getattr(logging, level_name),
        stream=sys.stderr,
        format="%(message)s" if fmt == "json" else "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def get_logger(name: str = __name__) -> structlog.BoundLogger:
    """Get a structured logger instance, configuring structlog on first use"""
    if not structlog.is_configured():
        setup_logging()
    return structlog.get_logger(name)
