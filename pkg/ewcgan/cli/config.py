import os
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..adapt import DEFAULT_LAMBDA_GRID, AdaptConfig
from ..datasets import GaussianMixtureSpec, TargetTransform, apply_transform, load_mixture_spec, ring_spec, shifted_ring_transform
from ..errors import UsageError
from ..fisher import DEFAULT_SAMPLES
from ..gan import TrainConfig
from ..metrics import EvalConfig
from ..models import config_digest

Importance = Literal["estimated", "uniform"]

DEFAULT_OUTPUT_DIR = "runs/default"


class RingConfig(BaseModel):
    n_modes: int = Field(8, ge=1)
    radius: float = Field(2.0, gt=0)
    sigma: float = Field(0.05, gt=0)


class SourceConfig(BaseModel):
    """Source mixture: either a ring or a YAML spec file (resolved relative to the config)."""

    ring: RingConfig = RingConfig()
    spec_file: Optional[str] = None


class FisherConfig(BaseModel):
    samples: int = Field(DEFAULT_SAMPLES, ge=1)
    seed: int = 0
    discriminator: bool = False


class SweepConfig(BaseModel):
    """Axes of the adaptation grid; transforms None means the single configured target."""

    lambdas: list[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID), min_length=1)
    shots: list[int] = Field(default_factory=lambda: [10], min_length=1)
    transforms: Optional[list[TargetTransform]] = Field(None, min_length=1)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    importance: list[Importance] = Field(default_factory=lambda: ["estimated"], min_length=1)

    @field_validator("lambdas")
    @classmethod
    def _nonnegative(cls, values: list[float]) -> list[float]:
        if any(v < 0 for v in values):
            raise ValueError("lambda values must be nonnegative")
        return values

    @field_validator("shots")
    @classmethod
    def _positive(cls, values: list[int]) -> list[int]:
        if any(v < 1 for v in values):
            raise ValueError("shot counts must be at least 1")
        return values


class CorrespondenceConfig(BaseModel):
    """lambdas None compares lambda = 0 with the largest swept lambda."""

    lambdas: Optional[list[float]] = Field(None, min_length=1)
    n_latent: int = Field(2000, ge=1)


class AnalysisConfig(BaseModel):
    iterations: int = Field(2000, ge=1)
    batch_size: int = Field(128, ge=1)
    seed: int = 0


class ExperimentConfig(BaseModel):
    """One experiment: source, target, every stage's settings and the sweep axes."""

    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    source: SourceConfig = SourceConfig()
    target: TargetTransform = Field(default_factory=shifted_ring_transform)
    shots: int = Field(10, ge=1)
    pretrain: TrainConfig = TrainConfig()
    fisher: FisherConfig = FisherConfig()
    adapt: AdaptConfig = AdaptConfig()
    evaluation: EvalConfig = EvalConfig()
    sweep: SweepConfig = SweepConfig()
    correspondence: CorrespondenceConfig = CorrespondenceConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    output_dir: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1)
    base_dir: str = "."

    @model_validator(mode="after")
    def _spec_file_exists(self) -> "ExperimentConfig":
        if self.source.spec_file is not None and not self.resolve(self.source.spec_file).is_file():
            raise ValueError(f"source spec file {self.source.spec_file} does not exist")
        return self

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def source_spec(self) -> GaussianMixtureSpec:
        if self.source.spec_file is not None:
            return load_mixture_spec(self.resolve(self.source.spec_file))
        ring = self.source.ring
        return ring_spec(ring.n_modes, ring.radius, ring.sigma)

    def target_spec(self, transform: Optional[TargetTransform] = None) -> GaussianMixtureSpec:
        return apply_transform(self.source_spec(), self.target if transform is None else transform)

    def transforms(self) -> list[TargetTransform]:
        return list(self.sweep.transforms) if self.sweep.transforms else [self.target]

    def correspondence_lambdas(self) -> list[float]:
        if self.correspondence.lambdas:
            return list(self.correspondence.lambdas)
        return sorted({0.0, max(self.sweep.lambdas)})

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Override every seed with one value (the --seed flag)."""
        return self.model_copy(update={
            "pretrain": self.pretrain.model_copy(update={"seed": seed}),
            "fisher": self.fisher.model_copy(update={"seed": seed}),
            "adapt": self.adapt.model_copy(update={"seed": seed}),
            "analysis": self.analysis.model_copy(update={"seed": seed}),
            "sweep": self.sweep.model_copy(update={"seeds": [seed]}),
        })

    def digest(self) -> str:
        return config_digest(self.model_dump(mode="json", exclude={"base_dir", "output_dir", "workers"}))


def load_experiment_config(path: Union[str, Path, None]) -> ExperimentConfig:
    """Parse and validate a YAML experiment config.

    Raises:
        UsageError: If the file is missing, unreadable or fails validation
    """
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"Config file not found: {path}")
    try:
        doc: Any = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise UsageError(f"Config {path} is not valid YAML: {e}") from e
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise UsageError(f"Config {path} must be a mapping at the top level")
    try:
        return ExperimentConfig.model_validate({**doc, "base_dir": str(path.parent)})
    except ValidationError as e:
        raise UsageError(f"Invalid config {path}:\n{e}") from e


def resolve_output_dir(config: ExperimentConfig, out: Optional[str] = None) -> Path:
    """--out flag, then the config, then EWCGAN_OUTPUT_DIR, then the built-in default."""
    return Path(out or config.output_dir or os.getenv("EWCGAN_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR)


def resolve_workers(config: ExperimentConfig, workers: Optional[int] = None) -> int:
    if workers is not None:
        value = workers
    elif config.workers is not None:
        value = config.workers
    elif os.getenv("EWCGAN_WORKERS"):
        try:
            value = int(os.environ["EWCGAN_WORKERS"])
        except ValueError as e:
            raise UsageError(f"EWCGAN_WORKERS must be an integer, got {os.environ['EWCGAN_WORKERS']!r}") from e
    else:
        value = os.cpu_count() or 1
    if value < 1:
        raise UsageError(f"worker count must be at least 1, got {value}")
    return int(value)
