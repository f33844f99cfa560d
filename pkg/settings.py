import logging
import os
import sys

# Environment-driven defaults. Alpha/beta defaults are conveniences, not model constants.
LOG_LEVEL = os.getenv("SYSID_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("SYSID_LOG_FILE")

MAX_ITERS = int(os.getenv("SYSID_MAX_ITERS", "200"))
TOL_STEP = float(os.getenv("SYSID_TOL_STEP", "1e-8"))
TOL_STAT = float(os.getenv("SYSID_TOL_STAT", "1e-6"))

DEFAULT_ALPHA = float(os.getenv("SYSID_DEFAULT_ALPHA", "1.0"))
DEFAULT_BETA = float(os.getenv("SYSID_DEFAULT_BETA", "10.0"))

VERIFY_SEED = int(os.getenv("SYSID_VERIFY_SEED", "20240"))

PORT = int(os.getenv("PORT", "8000"))


def configure_logging(level=None):
    """Configure root logging once for a process entry point."""
    handlers = [logging.StreamHandler(sys.stdout)]
    if LOG_FILE:
        handlers.append(logging.FileHandler(LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )
