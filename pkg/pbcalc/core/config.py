"""
Configuration settings for the pullback calculus interpreter
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Interpreter settings, read from PBCALC_* environment variables or a .env file"""

    model_config = SettingsConfigDict(env_prefix="PBCALC_", env_file=".env", case_sensitive=True, extra="ignore")

    # Application
    APP_NAME: str = "pbcalc"
    VERSION: str = "0.3.0"
    DEBUG: bool = Field(default=False, description="Verbose diagnostics on the command line")

    # Logging
    LOG_LEVEL: str = Field(default="WARNING", description="structlog filtering level")
    LOG_FORMAT: str = Field(default="console", description="console or json")

    # Reduction budgets
    FUEL: int = Field(default=1_000_000, ge=1, description="Reduction steps per normalization, premises included")
    ANF_FUEL: int = Field(default=1_000_000, ge=1, description="A-steps per A-normalization")
    TRACE_TAIL: int = Field(default=20, ge=0, description="Trace entries reported on fuel exhaustion")

    # Numeric checking
    FD_STEP: float = Field(default=1e-5, gt=0.0, description="Central difference step")
    FD_RTOL: float = Field(default=1e-4, gt=0.0)
    FD_ATOL: float = Field(default=1e-6, ge=0.0)
    ORACLE_RTOL: float = Field(default=1e-9, gt=0.0)
    SELF_TEST_POINTS: int = Field(default=3, ge=0, description="Registration self-test points per primitive")
    SELF_TEST_SEED: int = Field(default=0)


# Global settings instance
settings = Settings()
