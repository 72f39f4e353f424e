"""
Configuration Management
Pydantic settings for process-level environment configuration.
"""

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings read from the environment and an optional .env file."""

    model_config = SettingsConfigDict(
        env_prefix="HJB_EXEC_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # App Configuration
    app_name: str = Field(default="hjb-exec")
    version: str = Field(default="1.0.0")

    # Parallelism (0 = one worker per CPU)
    threads: int = Field(default=0, ge=0)
    executor: Literal["threads", "celery"] = Field(default="threads")
    path_chunk_size: int = Field(default=2000, ge=1)

    # Celery Configuration
    celery_broker_url: str = Field(default="redis://localhost:6379/0")
    celery_result_backend: str = Field(default="redis://localhost:6379/0")
    celery_task_timeout: int = Field(default=3600, ge=1)

    # Output
    output_dir: str = Field(default="results")

    # Logging
    log_level: str = Field(default="INFO")
    log_file: str = Field(default="")


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
