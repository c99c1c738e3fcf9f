"""
Multi-scale wavelet transformer operator learner.

The package bundles a small reverse-mode tensor engine, Haar wavelet
transforms, the operator network, its training loop, rollout metrics, a
Kolmogorov-flow data generator and the command line binding them together.
"""

import logging
import sys

from mswt.config import LOG_LEVEL

__version__ = "1.0.0"


def configure_logging(level=None):
    """Configure the root logger once for command-line runs."""
    level_name = (level or LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout)
        ]
    )
    logger = logging.getLogger(__name__)
    logger.debug(f"Logging configured at level {level_name}")
    return logger
