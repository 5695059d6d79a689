"""
Structured logging configuration for the few-shot separation toolkit.
Provides JSON logging for the console and JSON-lines event files for runs.
"""
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Any, Optional

from pythonjsonlogger import jsonlogger

from .config import LogFormat, LoggingConfig


_service_name = LoggingConfig().service


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    """Custom JSON formatter with additional fields."""

    def add_fields(self, log_record: Dict[str, Any], record: logging.LogRecord, message_dict: Dict[str, Any]) -> None:
        """Add custom fields to log record."""
        super().add_fields(log_record, record, message_dict)

        log_record['timestamp'] = datetime.now(timezone.utc).isoformat().replace('+00:00', 'Z')
        log_record['level'] = record.levelname
        log_record['service'] = _service_name

        if hasattr(record, 'latency_ms'):
            log_record['latency_ms'] = record.latency_ms


class EventFormatter(jsonlogger.JsonFormatter):
    """Formatter for event files: the record's extra fields plus a timestamp, nothing else."""

    def add_fields(self, log_record: Dict[str, Any], record: logging.LogRecord, message_dict: Dict[str, Any]) -> None:
        super().add_fields(log_record, record, message_dict)
        log_record['timestamp'] = datetime.now(timezone.utc).isoformat().replace('+00:00', 'Z')


def setup_logging(config: Optional[LoggingConfig] = None) -> None:
    """Setup logging configuration based on settings."""
    global _service_name
    config = config or LoggingConfig()
    _service_name = config.service

    if config.format == LogFormat.JSON:
        formatter: logging.Formatter = CustomJsonFormatter(
            fmt='%(timestamp)s %(level)s %(name)s %(message)s'
        )
    else:
        formatter = logging.Formatter(
            fmt='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

    # stderr keeps stdout free for tabular summaries
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)

    logging.root.setLevel(getattr(logging, config.level.upper()))
    logging.root.handlers = [handler]

    logging.getLogger("numba").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance with the given name."""
    return logging.getLogger(name)


class LoggerMixin:
    """Mixin class to add logging capabilities to any class."""

    @property
    def logger(self) -> logging.Logger:
        """Get logger for this class."""
        return get_logger(self.__class__.__name__)


def log_performance(operation: str, latency_ms: float, **metadata) -> None:
    """Log performance metrics."""
    logger = get_logger("performance")

    logger.info(
        f"Operation completed: {operation}",
        extra={
            "operation": operation,
            "latency_ms": latency_ms,
            **metadata
        }
    )


class EventLog:
    """
    Append-only JSON-lines event file.

    One record per event (training step, validation, checkpoint), so runs can
    be checked by scripts. Records only carry the fields passed in plus a
    timestamp.
    """

    def __init__(self, path: Path, name: str = "events"):
        """
        Open an event log.

        Args:
            path: JSON-lines file, appended to if it exists
            name: logger name suffix, one per open file
        """
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._logger = logging.getLogger(f"eventlog.{name}.{self.path.resolve()}")
        self._logger.propagate = False
        self._logger.setLevel(logging.INFO)
        self._handler = logging.FileHandler(self.path, mode="a", encoding="utf-8")
        self._handler.setFormatter(EventFormatter(fmt='%(message)s'))
        self._logger.handlers = [self._handler]

    def emit(self, event: str, **fields: Any) -> None:
        """Write one event record."""
        self._logger.info(event, extra={"event": event, **fields})

    def close(self) -> None:
        """Flush and detach the file handler."""
        self._handler.close()
        self._logger.handlers = []

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()
