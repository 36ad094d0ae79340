import sys
from typing import Any

from ci_coder.config import CONFIG

# set up logging configurations
BASE_LOGGING_CONFIG = {
    "backtrace": False,
    "diagnose": False,
    "catch": True,
    "serialize": CONFIG.logging.serialize,
}

# logging settings for the console logs; stdout is reserved for data
CONSOLE_LOGGING_CONFIG = {
    **BASE_LOGGING_CONFIG,  # type: ignore
    "colorize": not CONFIG.logging.serialize,
    "level": CONFIG.logging.level,
    "sink": sys.stderr,
    "format": "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <level>{message}</level>",
}

# logging settings for the log file
FILE_LOGGING_CONFIG = {
    **BASE_LOGGING_CONFIG,  # type: ignore
    "level": "DEBUG",
    "sink": CONFIG.logging.file,
    "rotation": "10 MB",
    "compression": "zip",
}

# Set up handlers list
HANDLERS: list[dict[str, Any]] = [CONSOLE_LOGGING_CONFIG]
if CONFIG.logging.file:
    HANDLERS.append(FILE_LOGGING_CONFIG)
