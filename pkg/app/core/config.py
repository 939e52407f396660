"""Runtime settings (environment) and protocol defaults (defaults.yaml)."""
from __future__ import annotations

import os
from functools import lru_cache
from typing import Any, Dict, Optional

import yaml
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load protocol defaults
DEFAULTS_PATH = os.path.join(
    os.path.dirname(__file__),
    "../schema/defaults.yaml"
)

with open(DEFAULTS_PATH, "r") as f:
    DEFAULTS: Dict[str, Any] = yaml.safe_load(f)

MAPS_DIR = os.path.join(os.path.dirname(__file__), "../schema/maps")


class Settings(BaseSettings):
    """Environment-tunable settings, read from ``COPRL_*`` variables or ``.env``."""

    model_config = SettingsConfigDict(env_prefix="COPRL_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    results_db_url: Optional[str] = None
    eta: float = DEFAULTS["lower_level"]["eta"]
    grid_res: float = DEFAULTS["lower_level"]["grid_res"]
    cost_max: int = DEFAULTS["lower_level"]["cost_max"]
    # support size used for path-level cost distributions
    cost_atoms: int = 256
    kd_rebuild_every: int = 64


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def horizon_for(difficulty: float) -> int:
    """Horizon T for a difficulty level; nearest tabulated level wins."""
    table = {float(k): int(v) for k, v in DEFAULTS["horizons"].items()}
    nearest = min(table, key=lambda level: abs(level - difficulty))
    return table[nearest]
