"""
Logging configuration for command-line runs.

Console or JSON structured logging through structlog; run-scoped values
(run id, subcommand, training step) travel through context variables.
"""

import logging
import sys
from typing import Any, Dict

import structlog
from structlog.types import Processor

from src.core.config import get_logging_settings


def setup_logging() -> None:
    """
    Configure structlog and the standard library root logger.

    The renderer and level come from LoggingSettings (LOG_FORMAT, LOG_LEVEL).
    """
    settings = get_logging_settings()

    renderer: Processor
    if settings.format == "json":
        renderer = structlog.processors.JSONRenderer(sort_keys=True)
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=False)

    processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        renderer,
    ]

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.enable_file_logging:
        handlers.append(logging.FileHandler(settings.log_file_path, encoding="utf-8"))

    logging.basicConfig(
        format="%(message)s",
        handlers=handlers,
        level=getattr(logging, settings.level),
        force=True,
    )

    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """
    Get a logger instance with the given name.

    Args:
        name: Logger name (typically __name__)

    Returns:
        BoundLogger: Configured logger instance
    """
    return structlog.get_logger(name)


class LoggerMixin:
    """
    Mixin class to add logging capabilities to any class.
    """

    @property
    def logger(self) -> structlog.stdlib.BoundLogger:
        """Get logger for this class."""
        if not hasattr(self, "_logger"):
            self._logger = get_logger(self.__class__.__name__)
        return self._logger


def bind_run_id(run_id: str) -> None:
    """
    Bind the run ID to context for all subsequent log messages.

    Args:
        run_id: Run identifier (usually the output directory name)
    """
    structlog.contextvars.bind_contextvars(run_id=run_id)


def bind_subcommand(subcommand: str) -> None:
    """
    Bind the CLI subcommand to context.

    Args:
        subcommand: Subcommand being dispatched, e.g. "ablate ts"
    """
    structlog.contextvars.bind_contextvars(subcommand=subcommand)


def bind_step(step: int) -> None:
    """
    Bind the current optimizer step to context.

    Args:
        step: Training step counter
    """
    structlog.contextvars.bind_contextvars(step=step)


def clear_contextvars() -> None:
    """Clear all context variables."""
    structlog.contextvars.clear_contextvars()


def log_exception(exc: Exception, context: Dict[str, Any]) -> None:
    """
    Log an exception with context.

    Args:
        exc: Exception to log
        context: Additional context information
    """
    logger = get_logger("exception")
    payload = exc.to_dict() if hasattr(exc, "to_dict") else {"message": str(exc)}
    logger.error(
        "exception_occurred",
        exception_type=type(exc).__name__,
        **payload,
        **context,
    )
