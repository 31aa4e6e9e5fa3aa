"""
Process settings for A2U Lab
Environment-driven defaults (loaded from .env when present)
"""
import os
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator
import structlog

load_dotenv()

logger = structlog.get_logger()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseModel):
    """
    Environment-level defaults.

    CLI flags and config files override these; they only decide what happens
    when nothing more specific is given.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    log_level: str = "INFO"
    data_dir: Path = Path("./data")
    output_dir: Path = Path("./runs")
    threads: int = Field(default=1, ge=1)

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"log level must be one of {LOG_LEVELS}")
        return value


def load_settings() -> Settings:
    """Read settings from the environment without caching."""
    settings = Settings(
        log_level=os.getenv("A2U_LOG_LEVEL", "INFO"),
        data_dir=Path(os.getenv("A2U_DATA_DIR", "./data")),
        output_dir=Path(os.getenv("A2U_OUTPUT_DIR", "./runs")),
        threads=int(os.getenv("A2U_THREADS", "1")),
    )
    logger.debug(
        "settings_loaded",
        log_level=settings.log_level,
        data_dir=str(settings.data_dir),
        output_dir=str(settings.output_dir),
        threads=settings.threads,
    )
    return settings


@lru_cache()
def get_settings() -> Settings:
    """Get singleton settings instance."""
    return load_settings()
