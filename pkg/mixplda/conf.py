from pydantic_settings import BaseSettings, SettingsConfigDict

__all__ = ["Settings", "settings"]


class Settings(BaseSettings):
    """
    Runtime settings, overridable with MIXPLDA_* environment variables.

    """

    model_config = SettingsConfigDict(env_prefix="MIXPLDA_")

    enable_call_log: bool = False
    log_level: str = "INFO"

    length_norm: bool = True
    window: float = 1.5
    hop: float = 0.75
    min_duration: float = 0.25

    em_iterations: int = 10
    within_floor: float = 1e-6
    score_floor: float = -1e6

    jobs: int = 1


settings = Settings()
