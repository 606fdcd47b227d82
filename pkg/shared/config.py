"""Centralized configuration using Pydantic Settings.

Run parameters live in the JSON RunConfig (see ``shared.types``); the environment
only overrides where artifacts are written.
"""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings loaded from environment and .env."""

    # Artifacts
    output_dir: str = "runs"

    model_config = SettingsConfigDict(
        env_prefix="NEUMANN_REG_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()
