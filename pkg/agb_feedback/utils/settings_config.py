"""
Runtime Settings
Environment-driven configuration for caches, caps and parallelism
"""

import logging
from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Settings read from AGB_* environment variables or a .env file"""

    model_config = SettingsConfigDict(
        env_prefix="AGB_", env_file=".env", extra="ignore"
    )

    log_level: str = "INFO"
    cache_dir: Path = Path(".agb_cache")
    use_cache: bool = True
    default_trials: int = Field(default=2000, ge=1)
    threads: int = Field(default=1, ge=1)

    # line packing
    packing_restarts: int = Field(default=8, ge=1)
    packing_iterations: int = Field(default=200, ge=0)
    packing_step: float = Field(default=0.1, gt=0)
    packing_decay: float = Field(default=0.95, gt=0, le=1)
    packing_max_size: int = Field(default=1024, ge=1)

    # caps
    codebook_cap_bits: int = Field(default=16, ge=1)
    enumeration_cap: int = Field(default=1_000_000, ge=1)
    combination_cap: int = Field(default=100_000, ge=1)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Get the process-wide settings instance"""
    settings = Settings()
    logger.debug(f"Settings loaded: {settings.model_dump()}")
    return settings
