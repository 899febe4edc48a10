import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

KV_FORMAT = 'level=%(levelname)s code=%(code)s msg="%(message)s"'
JSON_FORMAT = "%(levelname)s %(code)s %(message)s %(name)s"


class DiagnosticCodeFilter(logging.Filter):
    """Gives every record a ``code`` attribute so both formats can reference it."""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "code"):
            record.code = "-"
        return True


def build_formatter(log_format: str) -> logging.Formatter:
    if log_format == "json":
        return jsonlogger.JsonFormatter(
            JSON_FORMAT,
            rename_fields={"levelname": "level", "message": "msg", "name": "logger"},
        )
    if log_format == "kv":
        return logging.Formatter(KV_FORMAT)
    raise ValueError(f"unknown log format '{log_format}', expected 'kv' or 'json'")


def configure_logging(level: Optional[str] = None, log_format: Optional[str] = None) -> None:
    """Route the package loggers to standard error."""
    from .config import settings

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(build_formatter(log_format or settings.log_format))
    handler.addFilter(DiagnosticCodeFilter())

    root = logging.getLogger("cohortcast")
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel((level or settings.log_level).upper())
    root.propagate = False
