"""Pipeline configuration using Pydantic settings."""

import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from forexpulse.errors import ConfigError
from forexpulse.models.schemas import (
    RecommendationLexicon,
    SyntheticSpec,
    TypoRuleConfig,
    UserGroup,
)
from forexpulse.services.knowledge_base import get_knowledge_base

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_GROUP_RULES = get_knowledge_base().group_rules_path
DEFAULT_GROUPS = [
    UserGroup.TRADING_ROBOT,
    UserGroup.SPAMMER,
    UserGroup.TRADING_COMPANY,
    UserGroup.INDIVIDUAL_TRADER,
]


class BootstrapSettings(BaseSettings):
    """Environment lookups needed before the config file is known."""

    config: Optional[Path] = None

    model_config = SettingsConfigDict(
        env_prefix="FOREXPULSE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


class PipelineConfig(BaseSettings):
    """Effective configuration of one pipeline run."""

    # Input archives and outputs
    tweets: Optional[Path] = None
    rates: Optional[Path] = None
    events: Optional[Path] = None
    audit: Optional[Path] = None
    model: Optional[Path] = None
    out: Path = Path("out")
    group_rules: Path = DEFAULT_GROUP_RULES

    # Stance model
    dim: int = 2**18
    lambda_reg: float = Field(default=1e-4, gt=0.0)
    epochs: int = Field(default=10, gt=0)
    seed: int = 42
    folds: int = Field(default=10, ge=2)
    cv_gap: int = Field(default=0, ge=0)

    # Event study
    groups: list[UserGroup] = Field(default_factory=lambda: list(DEFAULT_GROUPS))
    theta: float = Field(default=0.0, ge=0.0)
    horizon: int = Field(default=1440, ge=1)
    window_days: int = Field(default=30, ge=1)
    event_window_minutes: int = Field(default=60, ge=1)

    # Ingest and forensics
    audit_latest_wins: bool = False
    author: Optional[str] = None
    typo: TypoRuleConfig = Field(default_factory=TypoRuleConfig)
    lexicon: RecommendationLexicon = Field(default_factory=lambda: get_knowledge_base().lexicon())

    synth: SyntheticSpec = Field(default_factory=SyntheticSpec)
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="FOREXPULSE_",
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        extra="ignore",
    )

    @field_validator("dim")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 1024 or value & (value - 1):
            raise ValueError("dim must be a power of two >= 1024")
        return value

    @field_validator("groups", mode="before")
    @classmethod
    def _split_groups(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [g.strip() for g in value.split(",") if g.strip()]
        return value

    @field_validator("groups")
    @classmethod
    def _nonempty_groups(cls, value: list[UserGroup]) -> list[UserGroup]:
        if not value:
            raise ValueError("at least one user group is required")
        # keep requested order, drop repeats
        return list(dict.fromkeys(value))

    @property
    def model_path(self) -> Path:
        return self.model or self.out / "stance_model.txt"

    def require_inputs(self, *names: str) -> None:
        """Fail with the offending path when a required input is missing."""
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"--{name} is required", module="cli")
            if not Path(path).is_file():
                raise ConfigError(f"input file not found: {path}", module="cli")


@lru_cache
def get_settings() -> PipelineConfig:
    """Get cached default settings (environment and .env only)."""
    return PipelineConfig()


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> PipelineConfig:
    """
    Build the effective configuration.

    Args:
        path: JSON config file; falls back to FOREXPULSE_CONFIG
        overrides: Values from command-line flags (highest precedence)

    Returns:
        Validated PipelineConfig
    """
    if path is None:
        path = BootstrapSettings().config

    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}", module="config")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"{path}: invalid JSON ({e})", module="config") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object", module="config")

    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return PipelineConfig(**data)
    except ValidationError as e:
        raise ConfigError(_summarize(e), module="config") from e


def _summarize(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)
