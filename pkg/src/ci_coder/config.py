import pathlib
import sys

import environ
from dotenv import load_dotenv
from loguru import logger

dotenv_file = pathlib.Path(".env")
if dotenv_file.exists():
    load_dotenv(dotenv_file)
    logger.info(f"Loaded env vars from file '{dotenv_file.absolute()}'")


@environ.config(prefix="CI_CODER", frozen=True)
class AppConfig:
    @environ.config(frozen=True)
    class Runtime:
        threads: int = environ.var(default=1, converter=int, help="Worker threads for file-parallel stages")

    @environ.config(frozen=True)
    class Logging:
        level: str = environ.var(default="INFO", help="Console and file log level")
        file: str | None = environ.var(default=None, help="Path of a rotating log file (disabled when unset)")
        serialize: bool = environ.bool_var(default=False, help="Whether to emit log records as JSON or not")

    runtime = environ.group(Runtime)
    logging = environ.group(Logging)


if __name__ == "__main__":
    print(environ.generate_help(AppConfig))  # noqa: T201

try:
    CONFIG = environ.to_config(AppConfig)
except (environ.MissingEnvValueError, ValueError) as e:
    logger.critical(f"Invalid environment configuration: '{e}'. Exiting.")
    sys.exit(1)

if CONFIG.runtime.threads < 1:
    logger.critical(f"CI_CODER_RUNTIME_THREADS must be at least 1, got {CONFIG.runtime.threads}. Exiting.")
    sys.exit(1)
