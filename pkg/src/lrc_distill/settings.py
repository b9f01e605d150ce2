from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    """Process-level knobs kept out of run configs and manifests."""

    log_level: str = Field(default="INFO", description="loguru level for stderr")
    teacher_workers: int = Field(
        default=1,
        ge=1,
        description="Worker threads used for frozen-teacher forward passes",
    )
    runs_dir: Path = Field(
        default=Path("runs"), description="Default root for run artifacts"
    )

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="LRC_",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return str(value).strip().upper()


settings = RuntimeSettings()
