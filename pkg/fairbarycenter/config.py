"""Configuration management for fairbarycenter."""

import os
from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Mode(str, Enum):
    """How in-sample transport targets are materialised."""
    BARYCENTRIC = "barycentric"
    STOCHASTIC = "stochastic"


class NotionKind(str, Enum):
    """Parity notion the post-processor enforces."""
    PLAIN = "plain"
    ODDS = "odds"
    OPPORTUNITY = "opportunity"


class Notion(BaseModel):
    """Parity notion, with the target class for equal opportunity."""

    kind: NotionKind = Field(NotionKind.PLAIN, description="plain, odds or opportunity")
    label: Optional[int] = Field(None, description="Target class for opportunity")

    @model_validator(mode="after")
    def validate_label(self) -> "Notion":
        """Opportunity needs exactly one target class; the others take none."""
        if self.kind == NotionKind.OPPORTUNITY and self.label is None:
            raise ValueError("Opportunity notion requires a target class")
        if self.kind != NotionKind.OPPORTUNITY and self.label is not None:
            raise ValueError(f"Notion '{self.kind.value}' does not take a target class")
        return self

    @classmethod
    def parse(cls, text: str) -> "Notion":
        """Parse 'plain', 'odds' or 'opportunity:<y>'."""
        text = text.strip().lower()
        if text.startswith("opportunity:"):
            value = text.split(":", 1)[1]
            try:
                return cls(kind=NotionKind.OPPORTUNITY, label=int(value))
            except ValueError:
                raise ValueError(f"Invalid opportunity class: {value!r}")
        try:
            return cls(kind=NotionKind(text))
        except ValueError:
            raise ValueError(f"Invalid notion: {text!r}. Valid: plain, odds, opportunity:<y>")

    def __str__(self) -> str:
        if self.kind == NotionKind.OPPORTUNITY:
            return f"opportunity:{self.label}"
        return self.kind.value


class LoggingConfig(BaseModel):
    """Configuration for logging."""

    level: str = Field("INFO", description="Logging level")
    format: str = Field(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Log format string"
    )
    file: Optional[str] = Field(None, description="Log file path (console only if None)")
    max_size: Optional[int] = Field(10, description="Maximum log file size in MB")
    backup_count: Optional[int] = Field(5, description="Number of backup log files to keep")

    @field_validator('level')
    @classmethod
    def validate_level(cls, v: str) -> str:
        """Validate logging level."""
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'Log level must be one of: {valid_levels}')
        return v.upper()


class SolverConfig(BaseModel):
    """Settings for the transport and barycenter solvers."""

    oracle_cap: int = Field(100_000, description="Largest tuple count the exact barycenter LP accepts")
    max_iterations: int = Field(10_000_000, description="Network simplex iteration limit")

    @field_validator('oracle_cap', 'max_iterations')
    @classmethod
    def validate_positive(cls, v: int) -> int:
        """Validate limits are positive."""
        if v < 1:
            raise ValueError('Solver limits must be positive')
        return v


class KernelConfig(BaseModel):
    """Bandwidth settings for out-of-sample kernel regression."""

    bandwidth_grid: List[float] = Field(
        default_factory=lambda: [0.02, 0.04, 0.5, 1.0],
        description="Candidate bandwidths"
    )
    high_dimension_threshold: int = Field(16, description="Largest k using the low-dimension bandwidth")
    low_dimension_bandwidth: float = Field(0.04, description="Bandwidth for k <= threshold")
    high_dimension_bandwidth: float = Field(0.5, description="Bandwidth for k > threshold")

    @field_validator('bandwidth_grid')
    @classmethod
    def validate_grid(cls, v: List[float]) -> List[float]:
        """Validate the bandwidth grid."""
        if not v or any(h <= 0 for h in v):
            raise ValueError('Bandwidth grid must be non-empty with positive values')
        return sorted(v)

    @model_validator(mode="after")
    def validate_defaults_in_grid(self) -> "KernelConfig":
        """Default bandwidths must come from the grid."""
        for h in (self.low_dimension_bandwidth, self.high_dimension_bandwidth):
            if h not in self.bandwidth_grid:
                raise ValueError(f'Default bandwidth {h} is not in the grid {self.bandwidth_grid}')
        return self

    def default_bandwidth(self, dimension: int) -> float:
        """Bandwidth chosen by output dimension."""
        if dimension <= self.high_dimension_threshold:
            return self.low_dimension_bandwidth
        return self.high_dimension_bandwidth


DEFAULT_ALPHAS = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


class RunConfig(BaseModel):
    """Parameters of one CLI run."""

    input: Optional[Path] = Field(None, description="Input CSV path")
    model: Optional[Path] = Field(None, description="Model document path")
    output: Optional[Path] = Field(None, description="Output path")
    alpha: float = Field(0.0, description="Interpolation weight for transform")
    alphas: List[float] = Field(default_factory=lambda: list(DEFAULT_ALPHAS), description="Sweep grid")
    bandwidth: Optional[float] = Field(None, description="Kernel bandwidth (default by dimension)")
    mode: Mode = Field(Mode.BARYCENTRIC, description="Target materialisation mode")
    seed: int = Field(0, description="Random seed")
    oracle_cap: int = Field(100_000, description="Exact barycenter size cap")
    notion: Notion = Field(default_factory=Notion, description="Parity notion")
    baseline: bool = Field(False, description="Add the per-coordinate baseline row to sweeps")

    @field_validator('alpha')
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        """Validate alpha lies in [0, 1]."""
        if not 0.0 <= v <= 1.0:
            raise ValueError(f'Alpha must be in [0, 1], got {v}')
        return v

    @field_validator('alphas')
    @classmethod
    def validate_alphas(cls, v: List[float]) -> List[float]:
        """Validate the alpha grid."""
        if not v:
            raise ValueError('Alpha grid must not be empty')
        if any(not 0.0 <= a <= 1.0 for a in v):
            raise ValueError('Alpha grid values must be in [0, 1]')
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError('Alpha grid must be sorted ascending')
        return v

    @field_validator('bandwidth')
    @classmethod
    def validate_bandwidth(cls, v: Optional[float]) -> Optional[float]:
        """Validate bandwidth is positive."""
        if v is not None and not v > 0.0:
            raise ValueError('Bandwidth must be positive')
        return v

    @field_validator('seed')
    @classmethod
    def validate_seed(cls, v: int) -> int:
        """Validate the seed fits in 64 bits."""
        if not 0 <= v < 2**64:
            raise ValueError('Seed must be in [0, 2^64)')
        return v

    @field_validator('oracle_cap')
    @classmethod
    def validate_cap(cls, v: int) -> int:
        """Validate oracle cap."""
        if v < 1:
            raise ValueError('Oracle cap must be positive')
        return v


class AppConfig(BaseSettings):
    """Main application configuration."""

    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    kernel: KernelConfig = Field(default_factory=KernelConfig)

    model_config = SettingsConfigDict(
        env_prefix="FAIRBARYCENTER_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8"
    )

    @classmethod
    def get_default_config_path(cls) -> Path:
        """Get the default configuration file path."""
        return Path.home() / ".config" / "fairbarycenter" / "config.yaml"

    @classmethod
    def load_config(cls, config_path: Optional[str] = None) -> "AppConfig":
        """Load configuration from file, or defaults if no default file exists."""
        if config_path:
            return cls.from_yaml(config_path)

        file_path = cls.get_default_config_path()
        if not file_path.exists():
            return cls()
        return cls.from_yaml(str(file_path))

    @classmethod
    def from_yaml(cls, file_path: str) -> "AppConfig":
        """Load configuration from YAML file."""
        import yaml

        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Configuration file not found: {file_path}")

        with open(file_path, 'r', encoding='utf-8') as f:
            config_data = yaml.safe_load(f) or {}

        return cls(**config_data)
