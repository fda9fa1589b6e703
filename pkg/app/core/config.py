"""Application configuration."""

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-level settings loaded from FLOWTOPO_* environment variables."""

    PROJECT_NAME: str = "flowtopo"
    VERSION: str = "0.1.0"
    DEBUG: bool = False

    # Assembly parallelism
    THREADS: int = 1  # Worker cap for element-parallel assembly
    ELEMENT_CHUNK_SIZE: int = 4096  # Elements per assembly task

    # Quadrature
    QUADRATURE_DEGREE: int = 6  # Default exactness degree
    VERIFICATION_QUADRATURE_DEGREE: int = 8  # Used by verify-* modes

    # Output
    OUTPUT_DIR: str = "runs"
    LOG_LEVEL: str = "INFO"

    @field_validator("THREADS", "ELEMENT_CHUNK_SIZE")
    @classmethod
    def validate_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("QUADRATURE_DEGREE", "VERIFICATION_QUADRATURE_DEGREE")
    @classmethod
    def validate_degree(cls, value: int) -> int:
        if value < 2:
            raise ValueError("quadrature degree must be at least 2")
        return value

    class Config:
        env_file = ".env"
        env_prefix = "FLOWTOPO_"
        case_sensitive = True
        extra = "ignore"


settings = Settings()
