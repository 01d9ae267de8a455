"""Process-level settings read from the environment."""

from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment-driven settings (prefix ``JRRELP_``)."""

    model_config = SettingsConfigDict(env_prefix="JRRELP_", extra="ignore")

    log_level: str = Field("INFO", description="Root logging level")
    redis_url: str = Field("redis://localhost:6379/0", description="Celery broker and result backend")
    celery_eager: bool = Field(True, description="Execute Celery tasks in-process")
    torch_threads: int = Field(1, ge=1, description="Intra-op threads for torch numerics")
    output_root: Path = Field(Path("runs"), description="Default parent directory for run outputs")


@lru_cache
def get_settings() -> Settings:
    return Settings()
