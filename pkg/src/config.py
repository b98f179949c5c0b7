import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.errors import InputError

load_dotenv()

VERSION = "1.0.0"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

ENVIRONMENT = {
    "out_dir": "CRITICALITY_OUT_DIR",
    "threads": "CRITICALITY_THREADS",
    "seed": "CRITICALITY_SEED",
    "log_level": "CRITICALITY_LOG_LEVEL",
    "block_size": "CRITICALITY_BLOCK_SIZE",
}


class Settings(BaseModel):
    """Runtime settings read from the environment (and a local .env file)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    out_dir: str = "./results"
    threads: int = Field(default=1, ge=1)
    seed: Optional[int] = None
    log_level: str = "INFO"
    block_size: int = Field(default=16384, ge=1)

    @field_validator("log_level", mode="before")
    @classmethod
    def _known_level(cls, value):
        level = str(value).strip().upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"unknown log level {value!r}")
        return level


def get_settings() -> Settings:
    """Build settings from the current environment; unset or blank variables keep their defaults"""
    values = {}
    for field, variable in ENVIRONMENT.items():
        raw = os.getenv(variable)
        if raw is not None and raw.strip():
            values[field] = raw.strip()
    try:
        return Settings(**values)
    except ValidationError as e:
        error = e.errors()[0]
        variable = ENVIRONMENT.get(str(error["loc"][0]), "environment") if error["loc"] else "environment"
        raise InputError(f"{variable}: {error['msg']}") from e
