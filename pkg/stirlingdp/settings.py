import os
from dataclasses import dataclass
from functools import lru_cache

from dotenv import load_dotenv

load_dotenv()


@dataclass(frozen=True)
class Settings:
    """Runtime configuration resolved from the environment (or a .env file)"""
    output_dir: str
    stirling_cap: int
    quad_rel_tol: float
    quad_max_evaluations: int
    closed_form_dps: int
    closed_form_max_m: int
    closed_form_min_digits: int
    rejection_budget: int
    consistency_every: int
    log_level: str


def _env_int(name, default):
    value = os.getenv(name)
    return default if value in (None, "") else int(value)


def _env_float(name, default):
    value = os.getenv(name)
    return default if value in (None, "") else float(value)


@lru_cache(maxsize=1)
def get_settings():
    """
    Read the STIRLINGDP_* environment variables once

    Returns:
        Settings instance shared by the whole process
    """
    return Settings(
        output_dir=os.getenv("STIRLINGDP_OUTPUT_DIR") or "results",
        stirling_cap=_env_int("STIRLINGDP_STIRLING_CAP", 2048),
        quad_rel_tol=_env_float("STIRLINGDP_QUAD_REL_TOL", 1e-10),
        quad_max_evaluations=_env_int("STIRLINGDP_QUAD_MAX_EVALUATIONS", 100_000),
        closed_form_dps=_env_int("STIRLINGDP_CLOSED_FORM_DPS", 50),
        closed_form_max_m=_env_int("STIRLINGDP_CLOSED_FORM_MAX_M", 60),
        closed_form_min_digits=_env_int("STIRLINGDP_CLOSED_FORM_MIN_DIGITS", 12),
        rejection_budget=_env_int("STIRLINGDP_REJECTION_BUDGET", 1_000_000),
        consistency_every=_env_int("STIRLINGDP_CONSISTENCY_EVERY", 500),
        log_level=os.getenv("STIRLINGDP_LOG_LEVEL") or "INFO",
    )


def reload_settings():
    """Drop the cached settings and read the environment again"""
    get_settings.cache_clear()
    return get_settings()
