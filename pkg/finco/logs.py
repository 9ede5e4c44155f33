"""Logging setup shared by the CLI and the pipeline driver."""

import logging

LOG_FORMAT = "[%(asctime)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
BANNER = "=" * 60


def configure_logging(verbose=False):
    """Timestamped single-line log records on stderr."""
    logging.basicConfig(
        format=LOG_FORMAT,
        datefmt=DATE_FORMAT,
        level=logging.DEBUG if verbose else logging.INFO,
        force=True,
    )


def banner(logger, title):
    """Log a title framed by separator lines."""
    logger.info(BANNER)
    logger.info(title)
    logger.info(BANNER)
