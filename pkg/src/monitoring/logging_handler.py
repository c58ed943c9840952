import logging
import json
import sys
from typing import Dict, Any, List, Optional
from datetime import datetime, timezone

from loguru import logger as loguru_logger

PLAIN_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class StructuredLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        """Format log record as structured JSON"""
        log_data = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'message': record.getMessage(),
            'logger': record.name,
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno
        }

        if hasattr(record, 'extra') and isinstance(record.extra, dict):
            log_data.update(record.extra)
        if record.exc_info:
            log_data['exception'] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


class ContextFormatter(logging.Formatter):
    """Human-readable lines with the ``extra`` mapping appended as key=value"""

    def __init__(self):
        super().__init__(PLAIN_FORMAT)

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        extra = getattr(record, 'extra', None)
        if isinstance(extra, dict) and extra:
            line += " " + " ".join(f"{k}={v}" for k, v in extra.items())
        return line


class LoggingHandler:
    """Attaches console and optional file handlers to the package logger.

    Re-configuring replaces the handlers installed by the previous call.
    """

    _installed: List[logging.Handler] = []

    def __init__(self, config: Dict[str, Any], stream=None):
        self.config = config
        self.logger = logging.getLogger(config.get('logger_name', 'src'))
        self.logger.setLevel(str(config.get('log_level', 'INFO')).upper())
        self.logger.propagate = False
        for handler in LoggingHandler._installed:
            self.logger.removeHandler(handler)
            handler.close()
        LoggingHandler._installed = []

        formatter = StructuredLogFormatter() if config.get('structured') else ContextFormatter()

        console_handler = logging.StreamHandler(stream or sys.stderr)
        console_handler.setFormatter(formatter)
        self._add(console_handler)

        if config.get('log_file'):
            file_handler = logging.FileHandler(config['log_file'])
            file_handler.setFormatter(StructuredLogFormatter())
            self._add(file_handler)

    def _add(self, handler: logging.Handler) -> None:
        self.logger.addHandler(handler)
        LoggingHandler._installed.append(handler)

    def log(self, level: str, message: str, extra: Optional[Dict[str, Any]] = None):
        """Log message with additional context"""
        log_method = getattr(self.logger, level.lower())
        log_method(message, extra={'extra': extra or {}})

    def info(self, message: str, extra: Optional[Dict[str, Any]] = None):
        self.log('info', message, extra)

    def warning(self, message: str, extra: Optional[Dict[str, Any]] = None):
        self.log('warning', message, extra)


def configure_loguru(level: str = "INFO", sink=None) -> int:
    """Route operator-facing messages to stderr; returns the sink id"""
    loguru_logger.remove()
    return loguru_logger.add(
        sink or sys.stderr,
        level=level.upper(),
        format="<level>{level: <8}</level> {message}",
        colorize=False,
    )
