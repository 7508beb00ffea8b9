"""
Run configuration: built-in defaults < YAML file < explicit CLI flags.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from ..core.geometry import LatticeKind, WeightingMode
from ..core.transfer import default_threads
from ..errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = Path("sawstrip.yml")


def _default_threads() -> int:
    # a .env next to the run may set SAWSTRIP_THREADS
    load_dotenv()
    return default_threads()


class RunConfig(BaseModel):
    """Everything a CLI run needs beyond the subcommand's own arguments."""

    lattice: LatticeKind = LatticeKind.SQUARE
    mode: WeightingMode = WeightingMode.ALL_SITE
    widths: list[int] = Field(default_factory=lambda: [1])
    half_length_L: int = Field(default=250, ge=1)
    degree_M: int = Field(default=250, ge=1)
    working_digits: int = Field(default=31, ge=1, le=31)
    analysis_digits: int = Field(default=50, ge=30)
    threads: int = Field(default_factory=_default_threads, ge=1)
    output: Optional[Path] = None
    format: str = Field(default="csv", pattern="^(csv|json)$")
    checkpoint: Optional[Path] = None
    budget_mb: float = Field(default=4096, gt=0)

    @field_validator("widths")
    @classmethod
    def _check_widths(cls, value: list[int]) -> list[int]:
        if not value or any(T < 0 for T in value):
            raise ValueError("widths must be a non-empty list of non-negative integers")
        return sorted(set(value))


def parse_widths(text: str) -> list[int]:
    """'3', '1..4' or '1,2,5' -> sorted widths."""
    widths: set[int] = set()
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..", 1)
                widths.update(range(int(lo), int(hi) + 1))
            elif part:
                widths.add(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse widths {text!r}; use e.g. '3', '1..4' or '1,2,5'")
    if not widths:
        raise ConfigError("no widths given")
    return sorted(widths)


def load_yaml(path: Optional[Path]) -> Dict[str, Any]:
    """Read a YAML config; the default file is optional, an explicit one is not."""
    if path is None:
        path = DEFAULT_CONFIG_FILE
        if not path.exists():
            return {}
    elif not path.exists():
        raise ConfigError(f"config file {path} not found")
    with open(path) as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML in {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping of settings")
    logger.debug(f"Loaded config from {path}: {sorted(data)}")
    return data


def build_config(path: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """Merge YAML settings with explicit overrides (None means 'not given')."""
    data = load_yaml(path)
    if isinstance(data.get("widths"), str):
        data["widths"] = parse_widths(data["widths"])
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(str(e))
