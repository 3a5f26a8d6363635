# Common utilities and shared modules
"""
Shared components used by every simulated endpoint:
- Project configuration
- Error taxonomy (wire error codes)
- Endpoint messaging base
- Logging configuration
"""

from .config import settings, PROJECT_ROOT, DATA_DIR
from .errors import StbError
from .logging import setup_logging

__all__ = [
    "settings",
    "PROJECT_ROOT",
    "DATA_DIR",
    "StbError",
    "setup_logging",
]
