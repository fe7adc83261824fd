"""
Core configuration management using Pydantic settings.
Loads process-level settings from environment variables with validation.
"""

from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class LoggingSettings(BaseSettings):
    """Logging configuration"""

    level: str = Field(default="INFO", alias="LOG_LEVEL")
    format: Literal["json", "text"] = Field(default="text", alias="LOG_FORMAT")

    @field_validator("level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        v = v.upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return v

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


class RunSettings(BaseSettings):
    """Where run artifacts (checkpoints, traces, reports) are written"""

    run_dir: Path = Field(default=Path("runs"), alias="KEAP_RUN_DIR")
    max_gradcheck_params: int = Field(default=200_000, alias="KEAP_GRADCHECK_PARAM_CAP")

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


class Settings(BaseSettings):
    """Main application settings"""

    environment: Literal["development", "ci", "research"] = Field(
        default="development", alias="ENVIRONMENT"
    )

    # Sub-settings
    logging: LoggingSettings = LoggingSettings()
    run: RunSettings = RunSettings()

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


# Global settings instance
settings = Settings()


def get_run_root() -> Path:
    """Run-directory root, re-read so KEAP_RUN_DIR changes after import are honored"""
    return RunSettings().run_dir
