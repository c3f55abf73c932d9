# envguard/config.py
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    LOG_LEVEL: str = "INFO"

    # --- Solver ---
    SOLVER_ENGINE: str = "auto"          # auto | qe | bb
    SOLVER_DEPTH_CAP: int = 40
    SOLVER_SPLIT_WIDTH: str = "1/100000"
    SOLVER_ATOMS_PEAK: int = 100_000
    SOLVER_TIMEOUT_SECONDS: float = 600
    FALSIFY_SAMPLES: int = 2000
    MONITOR_SAMPLES: int = 1000
    CROSS_CHECK_SAMPLES: int = 1_000_000  # sampling behind every proven network row

    # --- Workers / sampling ---
    WORKERS: int = 1
    SEED: int = 0

    # --- Fixed-point tuning ---
    TUNE_MIN_WIDTH: int = 4
    TUNE_MAX_WIDTH: int = 64
    COST_WEIGHT_MUL: str = "1"
    COST_WEIGHT_ADD: str = "1/8"
    COST_WEIGHT_DIV: str = "1"

    # --- Artifacts ---
    REPORT_DIR: str = "reports"

    # Pydantic v2 config: load .env and IGNORE unknown keys
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
