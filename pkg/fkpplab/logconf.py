"""
Logging configuration for the command line.

Library modules only create loggers; handlers are installed here, once, by
the CLI through logging.config.dictConfig.
"""

import json
import logging
import logging.config
from typing import Any, Dict

PLAIN_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class StructuredFormatter(logging.Formatter):
    """
    One JSON object per record.

    Run data passed as extra={"extra_data": {...}}, such as a verdict and its
    step count, is merged into the top level. It never overrides the core fields.
    """

    CORE = ("time", "level", "logger", "message")

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "time": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in getattr(record, "extra_data", {}).items():
            if key not in self.CORE:
                entry[key] = value
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


def logging_config(level: str = "INFO", structured: bool = False) -> Dict[str, Any]:
    """Build the dictConfig mapping for the fkpplab logger tree."""
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "plain": {"format": PLAIN_FORMAT, "datefmt": "%Y-%m-%d %H:%M:%S"},
            "structured": {"()": StructuredFormatter},
        },
        "handlers": {
            "stderr": {
                "class": "logging.StreamHandler",
                "level": level,
                "formatter": "structured" if structured else "plain",
                "stream": "ext://sys.stderr",
            },
        },
        "loggers": {
            "fkpplab": {
                "level": level,
                "handlers": ["stderr"],
                "propagate": False,
            },
        },
    }


def setup_logging(quiet: bool = False, structured: bool = False) -> None:
    """Install the stderr handler; quiet keeps only warnings and errors."""
    level = "WARNING" if quiet else "INFO"
    logging.config.dictConfig(logging_config(level, structured))
