# envguard/utils/logging.py
import logging
import sys

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_logger(name: str = "envguard") -> logging.Logger:
    return logging.getLogger(name)


def configure_logging(level: str = "INFO") -> logging.Logger:
    """One stderr handler on the package logger; later calls rebind it to the current stderr."""
    logger = get_logger()
    logger.setLevel(level.upper())
    if logger.handlers:
        for handler in logger.handlers:
            if isinstance(handler, logging.StreamHandler):
                handler.setStream(sys.stderr)
        return logger
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_FORMAT))
    logger.addHandler(handler)
    return logger
