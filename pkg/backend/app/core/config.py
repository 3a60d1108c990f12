"""
Core configuration for SyntaxNMT
Handles environment variables and process-level settings.

Experiment settings (model sizes, schedule, strategy) live in the experiment
config file, see backend.app.modules.experiment.
"""

import hashlib
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from environment variables / .env"""

    PROJECT_NAME: str = "SyntaxNMT"
    VERSION: str = "1.0.0"
    DESCRIPTION: str = "Syntax-aware NMT with interleaved CCG supertags"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_JSON: bool = False
    LOG_FILE: Optional[str] = None

    # Runtime
    SNMT_THREADS: int = 1  # decode worker threads
    DEFAULT_SEED: int = 1234
    DATA_DIR: str = "data"  # default root for generated corpora

    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_file=".env",
        extra="ignore"
    )


def derive_seed(seed: int, name: str) -> int:
    """
    Derive a stable named sub-seed from the experiment seed.

    Args:
        seed: Experiment seed
        name: Consumer name (shuffle, init, bootstrap, data, ...)

    Returns:
        32-bit integer seed
    """
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


# Global settings instance
settings = Settings()
