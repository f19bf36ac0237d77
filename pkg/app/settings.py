"""Environment settings loaded from .env."""

import os
from pathlib import Path

from dotenv import load_dotenv

OUTPUT_ROOT_ENV = "ANNULUS_LAB_OUTPUT_ROOT"


def load_environment() -> None:
    """Load a .env file from the working directory, if any"""
    load_dotenv(override=False)


def default_output_root() -> Path:
    """Output root from the environment, falling back to ./runs"""
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
