"""Runtime settings for sjed."""

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings.

    Experiment parameters live in JSON config files; these knobs only affect
    how a run is executed and reported, never its numeric results.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="SJED_",
        case_sensitive=False,
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO", description="Log level"
    )

    # Execution
    workers: int = Field(
        default=1, ge=1, description="Default sweep worker processes"
    )
    progress_every: int = Field(
        default=10, ge=1, description="Training batches between loss log lines"
    )


@lru_cache
def get_settings() -> Settings:
    """Get cached runtime settings."""
    return Settings()
