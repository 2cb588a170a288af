"""Logging utilities for cellattn.

The library logs through the ``cellattn`` logger hierarchy and installs only a
``NullHandler``. Applications (and the bundled CLI) attach their own handlers.

Example:
    Enable debug output for training only::

        import logging

        logging.getLogger("cellattn.evaluation").setLevel(logging.DEBUG)
        logging.getLogger("cellattn").addHandler(logging.StreamHandler())
"""

import logging


logger = logging.getLogger("cellattn")

logger.addHandler(logging.NullHandler())


def configure_cli_logging(verbose: bool = False) -> logging.Handler:
    """Attach a stderr handler to the package logger.

    Args:
        verbose: Use DEBUG instead of INFO.

    Returns:
        The installed handler, so callers can remove it again.
    """
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handler


__all__ = [
    "configure_cli_logging",
    "logger",
]
