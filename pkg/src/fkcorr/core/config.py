"""Application settings loaded from the environment.

Every variable uses the ``FKCORR_`` prefix, e.g. ``FKCORR_THREADS=8`` or
``FKCORR_LOG_LEVEL=DEBUG``. Command-line flags override these values.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


def _default_threads() -> int:
    return max(1, os.cpu_count() or 1)


class Settings(BaseSettings):
    """Runtime settings for fkcorr."""

    model_config = SettingsConfigDict(
        env_prefix="fkcorr_",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: LogLevel = "INFO"
    json_logs: bool = False
    include_timestamp: bool = True

    threads: int = Field(default_factory=_default_threads, ge=1)
    cache_dir: Path | None = None
    out_dir: Path = Path("results")

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_level(cls, value: object) -> object:
        return value.upper() if isinstance(value, str) else value


def get_settings(**overrides: object) -> Settings:
    """Build a fresh Settings instance, applying non-None overrides on top of the environment."""
    base = Settings()
    updates = {key: value for key, value in overrides.items() if value is not None}
    if not updates:
        return base
    return Settings.model_validate({**base.model_dump(), **updates})


settings = Settings()
