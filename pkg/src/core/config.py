"""
Configuration management for the aesthetic enhancement engine.

Two layers live here:

* process settings loaded from environment variables (pydantic-settings):
  logging options (``LOG_*``) and the thread-count override
  (``DIAE_NUM_THREADS``);
* the run configuration (``RunConfig``) resolved from a flat config file
  plus command-line overrides, and the typed sub-configs every package
  consumes.

Config file grammar
-------------------
UTF-8 text, one ``key = value`` per line. ``#`` starts a comment that runs to
the end of the line; blank lines are ignored. Keys are the snake_case field
names of ``RunConfig`` (``lambda`` is the key of ``lambda_``). Lists are
comma-separated, booleans are ``true|false|yes|no|1|0``, and an empty value
means "unset" for optional fields. Unknown keys are a hard error.
"""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.core.exceptions import ConfigurationError, UnknownConfigKeyError

SUPPORTED_SIDES = (32, 48, 64, 256)
GROUP_NORM_GROUPS = 8


class LoggingSettings(BaseSettings):
    """Logging configuration."""

    level: str = Field(default="INFO", description="Log level")
    format: str = Field(default="text", description="Log format (json or text)")
    enable_file_logging: bool = Field(default=False, description="Enable file logging")
    log_file_path: str = Field(default="logs/diae.log", description="Log file path")

    @field_validator("level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()

    @field_validator("format")
    @classmethod
    def validate_format(cls, v: str) -> str:
        """Validate log renderer."""
        if v.lower() not in ("json", "text"):
            raise ValueError("Log format must be 'json' or 'text'")
        return v.lower()

    model_config = SettingsConfigDict(
        env_prefix="LOG_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


class RuntimeSettings(BaseSettings):
    """Process-level runtime options."""

    num_threads: Optional[int] = Field(
        default=None, ge=1, description="Worker threads for per-sample parallelism"
    )

    model_config = SettingsConfigDict(
        env_prefix="DIAE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    def resolved_threads(self) -> int:
        """Thread count with the CPU count as fallback."""
        return self.num_threads or max(1, os.cpu_count() or 1)


class Settings(BaseSettings):
    """Process settings loaded from the environment."""

    logging: Optional[LoggingSettings] = None
    runtime: Optional[RuntimeSettings] = None

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    def __init__(self, **kwargs):
        """Initialize settings and nested configurations."""
        super().__init__(**kwargs)
        if self.logging is None:
            self.logging = LoggingSettings()
        if self.runtime is None:
            self.runtime = RuntimeSettings()


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    Get the global settings instance.

    Returns:
        Settings: Process settings
    """
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reload_settings() -> Settings:
    """
    Reload settings from environment.

    Returns:
        Settings: Reloaded process settings
    """
    global _settings
    _settings = Settings()
    return _settings


def get_logging_settings() -> LoggingSettings:
    """Shortcut for the logging section of the process settings."""
    return get_settings().logging


def get_num_threads() -> int:
    """Worker thread count honouring DIAE_NUM_THREADS."""
    return get_settings().runtime.resolved_threads()


# Typed sub-configs


class FoldPolicy(str, Enum):
    """How the input branch maps a sampled timestep."""

    FOLDED = "folded"
    GATED = "gated"


class MapMode(str, Enum):
    """Which modalities of the aesthetic control signal are active."""

    FULL = "full"
    TEXT_ONLY = "text_only"  # visual modality withdrawn
    VISUAL_ONLY = "visual_only"  # text modality withdrawn


class UNetConfig(BaseModel):
    """Architecture of the toy conditional epsilon-prediction UNet."""

    side: int = 32
    in_channels: int = 3
    cond_channels: int = 3
    out_channels: int = 3
    base_channels: int = 32
    channel_mults: Tuple[int, ...] = (1, 2, 4)
    num_res_blocks: int = 2
    time_embed_dim: int = 128
    caption_dim: int = 64

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_geometry(self) -> "UNetConfig":
        """Side must be divisible by 2^(levels-1); widths by the group count."""
        levels = len(self.channel_mults)
        if levels < 1:
            raise ValueError("channel_mults must name at least one level")
        if self.side % (2 ** (levels - 1)) != 0:
            raise ValueError(
                f"side {self.side} not divisible by 2^(levels-1) = {2 ** (levels - 1)}"
            )
        for mult in self.channel_mults:
            if (self.base_channels * mult) % GROUP_NORM_GROUPS != 0:
                raise ValueError(
                    f"channel width {self.base_channels * mult} not divisible by "
                    f"{GROUP_NORM_GROUPS} groups"
                )
        if self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be even")
        return self

    @property
    def levels(self) -> int:
        return len(self.channel_mults)

    def level_channels(self) -> List[int]:
        """Channel width of each encoder level."""
        return [self.base_channels * m for m in self.channel_mults]

    def level_sides(self) -> List[int]:
        """Spatial side of each encoder level."""
        return [self.side // (2**level) for level in range(self.levels)]


class AdapterConfig(BaseModel):
    """Shape of the aesthetic control adapter."""

    side: int = 32
    levels: int = 3
    channels: int = 16
    text_dim: int = 64

    model_config = ConfigDict(frozen=True)


class TrainConfig(BaseModel):
    """Dual-branch training configuration."""

    T: int = Field(default=1000, ge=2)
    t_s: Optional[int] = None
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    fold_policy: FoldPolicy = FoldPolicy.FOLDED
    learning_rate: float = Field(default=1e-4, ge=0.0)
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    batch_size: int = Field(default=16, ge=1)
    steps: int = Field(default=5000, ge=0)
    seed: int = 0
    checkpoint_interval: int = Field(default=1000, ge=1)
    log_interval: int = Field(default=10, ge=1)
    side: int = 32
    deterministic: bool = True
    freeze_text_tables: bool = False
    map_mode: MapMode = MapMode.FULL

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def resolve_threshold(self) -> "TrainConfig":
        """Default t_s keeps the 900/1000 ratio; enforce 1 <= t_s <= T."""
        if self.t_s is None:
            object.__setattr__(self, "t_s", max(1, round(0.9 * self.T)))
        if not 1 <= self.t_s <= self.T:
            raise ValueError(f"t_s must satisfy 1 <= t_s <= T (got t_s={self.t_s}, T={self.T})")
        return self


class CorpusConfig(BaseModel):
    """Synthetic corpus generation and pairing options."""

    corpus_dir: Path = Path("corpus")
    side: int = 32
    num_images: int = Field(default=6000, ge=1)
    train_triplets: int = Field(default=2000, ge=0)
    test_triplets: int = Field(default=200, ge=0)
    low_max: float = 4.0
    high_min: float = 7.0
    high_quality_fraction: float = Field(default=0.35, ge=0.0, le=1.0)
    seed: int = 0

    model_config = ConfigDict(frozen=True)


class EvalConfig(BaseModel):
    """Evaluation harness options."""

    num_sample_steps: int = Field(default=50, ge=1)
    seeds: Tuple[int, ...] = (0, 1, 2)
    limit: int = Field(default=0, ge=0)
    sample_batch_size: int = Field(default=16, ge=1)
    identity_baseline: bool = False
    deterministic: bool = True

    model_config = ConfigDict(frozen=True)


# Run configuration

_LIST_FIELDS = {"channel_mults", "eval_seeds", "ablation_ts_values", "ablation_seeds"}
_OPTIONAL_FIELDS = {"t_s", "resume", "warm_start"}


class RunConfig(BaseModel):
    """
    Flat, fully resolved configuration of one CLI invocation.

    Every package reads its typed projection (``train_config()``,
    ``unet_config()``, ...) rather than the flat view.
    """

    # diffusion
    T: int = Field(default=1000, ge=2)
    t_s: Optional[int] = None
    beta_start: float = 1e-4
    beta_end: float = 0.02

    # model
    side: int = 32
    base_channels: int = Field(default=32, ge=GROUP_NORM_GROUPS)
    channel_mults: List[int] = Field(default_factory=lambda: [1, 2, 4])
    num_res_blocks: int = Field(default=2, ge=1)
    time_embed_dim: int = Field(default=128, ge=2)
    caption_dim: int = Field(default=64, ge=1)
    adapter_channels: int = Field(default=16, ge=1)
    map_mode: MapMode = MapMode.FULL

    # training
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    fold_policy: FoldPolicy = FoldPolicy.FOLDED
    learning_rate: float = Field(default=1e-4, ge=0.0)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = Field(default=0.01, ge=0.0)
    batch_size: int = Field(default=16, ge=1)
    steps: int = Field(default=5000, ge=0)
    seed: int = 0
    checkpoint_interval: int = Field(default=1000, ge=1)
    log_interval: int = Field(default=10, ge=1)
    freeze_text_tables: bool = False
    deterministic: bool = True
    resume: Optional[str] = None
    warm_start: Optional[str] = None

    # corpus
    corpus_dir: str = "corpus"
    num_images: int = Field(default=6000, ge=1)
    train_triplets: int = Field(default=2000, ge=0)
    test_triplets: int = Field(default=200, ge=0)
    low_max: float = 4.0
    high_min: float = 7.0
    high_quality_fraction: float = Field(default=0.35, ge=0.0, le=1.0)

    # evaluation
    num_sample_steps: int = Field(default=50, ge=1)
    eval_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    eval_limit: int = Field(default=0, ge=0)
    sample_batch_size: int = Field(default=16, ge=1)
    identity_baseline: bool = False

    # ablations
    ablation_ts_values: List[int] = Field(default_factory=list)
    ablation_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    ablation_steps: int = Field(default=2000, ge=0)
    ablation_step_cap: int = Field(default=60000, ge=0)

    # output
    out_dir: str = "runs/default"
    plots: bool = False

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @field_validator(*sorted(_LIST_FIELDS), mode="before")
    @classmethod
    def split_lists(cls, v: Any) -> Any:
        """Accept comma-separated strings for list fields."""
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v

    @field_validator(*sorted(_OPTIONAL_FIELDS), mode="before")
    @classmethod
    def empty_is_none(cls, v: Any) -> Any:
        """An empty value unsets an optional field."""
        if isinstance(v, str) and v.strip() == "":
            return None
        return v

    @field_validator("side")
    @classmethod
    def validate_side(cls, v: int) -> int:
        """Only the supported render sides are accepted."""
        if v not in SUPPORTED_SIDES:
            raise ValueError(f"side must be one of {SUPPORTED_SIDES}")
        return v

    @model_validator(mode="after")
    def validate_ranges(self) -> "RunConfig":
        """Resolve t_s and enforce cross-field invariants."""
        if self.t_s is None:
            self.t_s = max(1, round(0.9 * self.T))
        if not 1 <= self.t_s <= self.T:
            raise ValueError(f"t_s must satisfy 1 <= t_s <= T (got t_s={self.t_s}, T={self.T})")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ValueError("beta bounds must satisfy 0 < beta_start <= beta_end < 1")
        if self.low_max >= self.high_min:
            raise ValueError("low_max must be strictly below high_min")
        if not 1 <= self.num_sample_steps <= self.T:
            raise ValueError("num_sample_steps must lie in [1, T]")
        for value in self.ablation_ts_values:
            if not 1 <= value <= self.T:
                raise ValueError(f"ablation t_s value {value} outside [1, T]")
        # geometry checks are shared with the UNet config
        self.unet_config()
        return self

    # projections

    def unet_config(self) -> UNetConfig:
        return UNetConfig(
            side=self.side,
            base_channels=self.base_channels,
            channel_mults=tuple(self.channel_mults),
            num_res_blocks=self.num_res_blocks,
            time_embed_dim=self.time_embed_dim,
            caption_dim=self.caption_dim,
        )

    def adapter_config(self) -> AdapterConfig:
        return AdapterConfig(
            side=self.side,
            levels=len(self.channel_mults),
            channels=self.adapter_channels,
            text_dim=self.caption_dim,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            T=self.T,
            t_s=self.t_s,
            lambda_=self.lambda_,
            fold_policy=self.fold_policy,
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            steps=self.steps,
            seed=self.seed,
            checkpoint_interval=self.checkpoint_interval,
            log_interval=self.log_interval,
            side=self.side,
            deterministic=self.deterministic,
            freeze_text_tables=self.freeze_text_tables,
            map_mode=self.map_mode,
        )

    def schedule_args(self) -> Tuple[int, float, float]:
        """(T, beta_start, beta_end) for build_schedule."""
        return self.T, self.beta_start, self.beta_end

    def corpus_config(self) -> CorpusConfig:
        return CorpusConfig(
            corpus_dir=Path(self.corpus_dir),
            side=self.side,
            num_images=self.num_images,
            train_triplets=self.train_triplets,
            test_triplets=self.test_triplets,
            low_max=self.low_max,
            high_min=self.high_min,
            high_quality_fraction=self.high_quality_fraction,
            seed=self.seed,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            num_sample_steps=self.num_sample_steps,
            seeds=tuple(self.eval_seeds),
            limit=self.eval_limit,
            sample_batch_size=self.sample_batch_size,
            identity_baseline=self.identity_baseline,
            deterministic=self.deterministic,
        )

    def resolved_ts_values(self) -> List[int]:
        """Ablation t_s grid; defaults to 0.3T, 0.6T, 0.9T."""
        if self.ablation_ts_values:
            return list(self.ablation_ts_values)
        return [max(1, round(f * self.T)) for f in (0.3, 0.6, 0.9)]

    # serialization

    def to_config_text(self) -> str:
        """Render in the config file grammar, keys sorted."""
        data = self.model_dump(by_alias=True, mode="json")
        lines = ["# resolved configuration"]
        for key in sorted(data):
            lines.append(f"{key} = {_format_value(data[key])}")
        return "\n".join(lines) + "\n"

    def write(self, directory: Path) -> Path:
        """Echo the resolved config into an output directory."""
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "config.txt"
        path.write_text(self.to_config_text(), encoding="utf-8")
        return path


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _known_keys() -> Dict[str, str]:
    """Map accepted file keys to field names."""
    keys: Dict[str, str] = {}
    for name, field in RunConfig.model_fields.items():
        keys[name] = name
        if field.alias:
            keys[field.alias] = name
    return keys


def parse_config_text(text: str) -> Dict[str, str]:
    """
    Parse config file text into raw key/value strings.

    Args:
        text: Config file contents

    Returns:
        dict: Raw values keyed by field name

    Raises:
        ConfigurationError: On malformed lines or unknown keys
    """
    known = _known_keys()
    raw: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigurationError(
                message=f"Malformed config line {number}: expected 'key = value'",
                error_code="CONFIG_SYNTAX",
                details={"line": number, "text": line},
            )
        key, value = (part.strip() for part in content.split("=", 1))
        if key not in known:
            raise UnknownConfigKeyError(key, line=number)
        raw[known[key]] = value
    return raw


def parse_config(path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig from an optional file plus flag overrides.

    Args:
        path: Config file path (None means defaults only)
        overrides: Flag values keyed by field name; None values are ignored

    Returns:
        RunConfig: Fully resolved configuration

    Raises:
        ConfigurationError: Missing file, unknown key, type mismatch or range violation
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(
                message=f"Cannot read config file: {path}",
                error_code="CONFIG_UNREADABLE",
                details={"path": str(path), "error": str(e)},
            ) from e
        raw.update(parse_config_text(text))

    known = _known_keys()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise UnknownConfigKeyError(key)
        raw[known[key]] = value

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        errors = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        raise ConfigurationError(
            message=f"Invalid configuration: {errors[0]['field'] or 'config'}: {errors[0]['message']}",
            error_code="CONFIG_INVALID",
            details={"errors": errors},
        ) from e
