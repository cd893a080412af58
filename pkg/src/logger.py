import logging
from typing import Optional


def setup_logger(name: str, level: str, log_file: Optional[str] = None) -> logging.Logger:
    """
    Configures and returns a logger with timestamps.
    Writes to `log_file` when given, otherwise to stderr.
    Calling it again for the same name replaces the previous handler.
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    for old in list(logger.handlers):
        logger.removeHandler(old)
        old.close()

    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    handler = logging.FileHandler(log_file) if log_file else logging.StreamHandler()
    handler.setFormatter(fmt)
    logger.addHandler(handler)
    return logger
