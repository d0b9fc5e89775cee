"""
Settings and parameter overrides for rigstable.

Process-level settings come from environment variables; loss and metric
parameters come from an optional YAML overrides file. Command-line flags
take precedence over the file, which takes precedence over module defaults.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError
from .skelgeom import ALIGNMENTS, GeomLossConfig
from .skeltoken import DEFAULT_N_DISC, TokenLossWeights
from .skinloss import SkinLossWeights
from .toytrain import TrainOptions

__all__ = [
    "LOG_LEVELS",
    "Settings",
    "create_settings_from_env",
    "TokenParams",
    "GeomParams",
    "SkinParams",
    "MetricParams",
    "TrainParams",
    "ParamOverrides",
    "load_param_overrides",
]

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class Settings:
    """
    Process-level configuration.

    Attributes:
        seed: Global seed for every stochastic stage
        threads: Worker threads for batch commands (0 = one per CPU)
        n_disc: Coordinate bins used by the token codec
        float_digits: Significant digits in report files
        log_level: Logging level name for the CLI handler
    """
    seed: int = 42
    threads: int = 0
    n_disc: int = DEFAULT_N_DISC
    float_digits: int = 12
    log_level: str = "WARNING"

    def __post_init__(self):
        """Validate settings on construction."""
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.threads < 0:
            raise ValueError(f"threads must be non-negative, got {self.threads}")
        if self.n_disc < 2:
            raise ValueError(f"n_disc must be >= 2, got {self.n_disc}")
        if not 1 <= self.float_digits <= 17:
            raise ValueError(f"float_digits must lie in [1, 17], got {self.float_digits}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}, got {self.log_level!r}")
        object.__setattr__(self, "log_level", self.log_level.upper())

    def effective_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


# Settings loading functions (no caching)


def create_settings_from_env() -> Settings:
    """
    Load settings from environment variables.

    Environment Variables:
        - RIGSTABLE_SEED (default: 42)
        - RIGSTABLE_THREADS (default: 0, one per CPU)
        - RIGSTABLE_N_DISC (default: 256)
        - RIGSTABLE_FLOAT_DIGITS (default: 12)
        - RIGSTABLE_LOG_LEVEL (default: WARNING)

    Returns:
        Settings object with validated configuration

    Raises:
        ValueError: If a variable is malformed or out of range

    Note:
        Creates a fresh Settings instance every time (no caching).
    """
    return _load_settings_impl()


def _load_settings_impl() -> Settings:
    def get_int(key: str, default: int) -> int:
        value = os.getenv(key)
        try:
            return int(value) if value else default
        except ValueError as e:
            raise ValueError(f"{key} must be an integer, got {value!r}") from e

    return Settings(
        seed=get_int("RIGSTABLE_SEED", 42),
        threads=get_int("RIGSTABLE_THREADS", 0),
        n_disc=get_int("RIGSTABLE_N_DISC", DEFAULT_N_DISC),
        float_digits=get_int("RIGSTABLE_FLOAT_DIGITS", 12),
        log_level=os.getenv("RIGSTABLE_LOG_LEVEL") or "WARNING",
    )


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def merged(self, **flags: Any) -> Dict[str, Any]:
        """File values overlaid with the non-None command-line ``flags``."""
        values = self.model_dump(exclude_none=True)
        values.update({k: v for k, v in flags.items() if v is not None})
        return values


class TokenParams(_Section):
    """Token loss parameters."""
    n_disc: Optional[int] = Field(default=None, ge=2, description="Coordinate bins (default 256)")
    alpha: Optional[float] = Field(default=None, ge=1.0, description="Parent-slot weight (default 3)")
    lambda_anchor: Optional[float] = Field(default=None, ge=0.0, description="Anchor term (default 1)")
    lambda_sym: Optional[float] = Field(default=None, ge=0.0, description="Symmetric term (default 1)")
    max_frames: Optional[int] = Field(default=None, ge=1, description="Frame subsample size (default all)")

    def weights(self, **flags: Any) -> TokenLossWeights:
        values = self.merged(**flags)
        return TokenLossWeights(**{k: values[k] for k in ("alpha", "lambda_anchor", "lambda_sym") if k in values})


class GeomParams(_Section):
    """Geometry loss parameters."""
    rho: Optional[float] = Field(default=None, gt=0.0, le=1.0, description="Edge fraction (default 1)")
    lambda_dir: Optional[float] = Field(default=None, ge=0.0)
    lambda_len: Optional[float] = Field(default=None, ge=0.0)
    lambda_ch: Optional[float] = Field(default=None, ge=0.0)
    alignment: Optional[str] = Field(default=None, description=f"One of {ALIGNMENTS}")
    lambda_token: Optional[float] = Field(default=None, ge=0.0, description="Token weight (default 1)")
    lambda_geom: Optional[float] = Field(default=None, ge=0.0, description="Geometry weight (default 0.5)")

    def config(self, **flags: Any) -> GeomLossConfig:
        values = self.merged(**flags)
        keys = ("rho", "lambda_dir", "lambda_len", "lambda_ch", "alignment")
        return GeomLossConfig(**{k: values[k] for k in keys if k in values})


class SkinParams(_Section):
    """Skinning loss and teacher-mask parameters."""
    lambda_sym: Optional[float] = Field(default=None, ge=0.0)
    lambda_1: Optional[float] = Field(default=None, ge=0.0)
    lambda_anchor: Optional[float] = Field(default=None, ge=0.0)
    lambda_ent: Optional[float] = Field(default=None, ge=0.0)
    lambda_prior: Optional[float] = Field(default=None, ge=0.0)
    beta: Optional[float] = Field(default=None, gt=0.0)
    prior_window: Optional[List[int]] = None
    warmup_epochs: Optional[int] = Field(default=None, ge=0)
    epsilon: Optional[float] = Field(default=None, gt=0.0)
    k_s: Optional[int] = Field(default=None, ge=1, description="Top-k teacher support (default 4)")
    gamma: Optional[float] = Field(default=None, ge=0.0, description="Teacher weight floor (default 0)")
    n_samples: Optional[int] = Field(default=None, ge=1, description="Surface samples (default 1024)")
    min_valid_joints: Optional[int] = Field(default=None, ge=1)

    def weights(self, **flags: Any) -> SkinLossWeights:
        values = self.merged(**flags)
        keys = (
            "lambda_sym", "lambda_1", "lambda_anchor", "lambda_ent", "lambda_prior",
            "beta", "prior_window", "warmup_epochs", "epsilon",
        )
        kwargs = {k: values[k] for k in keys if k in values}
        if "prior_window" in kwargs:
            kwargs["prior_window"] = tuple(kwargs["prior_window"])
        return SkinLossWeights(**kwargs)


class MetricParams(_Section):
    """Evaluation parameters."""
    n_eigs: Optional[int] = Field(default=None, ge=1, description="GSD eigenvalues (default 8)")
    samples_per_bone: Optional[int] = Field(default=None, ge=2)
    static_threshold: Optional[float] = Field(default=None, ge=0.0)


class TrainParams(_Section):
    """Toy fine-tuning parameters."""
    lr: Optional[float] = Field(default=None, ge=0.0, description="Learning rate (default 0.05)")
    steps: Optional[int] = Field(default=None, ge=0, description="Gradient steps (default 200)")
    n_features: Optional[int] = Field(default=None, ge=1)
    freq_scale: Optional[float] = Field(default=None, gt=0.0)
    init_scale: Optional[float] = Field(default=None, ge=0.0)

    def options(self, seed: int, **flags: Any) -> TrainOptions:
        return TrainOptions(seed=seed, **self.merged(**flags))


class ParamOverrides(BaseModel):
    """Top-level layout of a ``--params`` YAML file."""
    model_config = ConfigDict(extra="forbid")

    token: TokenParams = Field(default_factory=TokenParams)
    geom: GeomParams = Field(default_factory=GeomParams)
    skin: SkinParams = Field(default_factory=SkinParams)
    metrics: MetricParams = Field(default_factory=MetricParams)
    train: TrainParams = Field(default_factory=TrainParams)


def load_param_overrides(path: Optional[Union[str, Path]]) -> ParamOverrides:
    """
    Parse a YAML overrides file; ``None`` gives empty overrides.

    Raises:
        ConfigError: INVALID_PARAMS for unreadable YAML, unknown keys or out-of-range values
    """
    if path is None:
        return ParamOverrides()
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError("INVALID_PARAMS", f"cannot read {p}: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("INVALID_PARAMS", f"{p}: top level must be a mapping")
    try:
        overrides = ParamOverrides.model_validate(raw)
    except ValidationError as e:
        raise ConfigError("INVALID_PARAMS", f"{p}: {e}") from e
    logging.getLogger(__name__).debug(f"Loaded parameter overrides from {p}")
    return overrides
