from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from ..datasets import FewShotSet, GaussianMixtureSpec
from ..models import Checkpoint, generate_samples
from .gaussian import GaussianFit, fit_gaussian, frechet_distance
from .sampling import DEFAULT_R_SIGMAS, default_memorization_radius, diversity, memorization, mode_coverage


class EvalConfig(BaseModel):
    n_samples: int = Field(5000, ge=2)
    n_pairs: int = Field(5000, ge=1)
    r_sigmas: float = Field(DEFAULT_R_SIGMAS, gt=0)
    memorization_eps: Optional[float] = Field(None, gt=0)
    seed: int = 0


@dataclass(frozen=True)
class MetricsReport:
    frechet_distance: float
    diversity: float
    mode_coverage: float
    high_quality_fraction: float
    memorization_fraction: float
    n_samples: int
    seed: int

    def as_row(self) -> dict[str, float]:
        return {
            "fd": self.frechet_distance,
            "diversity": self.diversity,
            "coverage": self.mode_coverage,
            "hq_fraction": self.high_quality_fraction,
            "memorization": self.memorization_fraction,
        }

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_samples(
    samples: np.ndarray,
    spec: GaussianMixtureSpec,
    config: EvalConfig,
    fewshot: Optional[FewShotSet] = None,
) -> MetricsReport:
    """Score generated points against the distribution they should follow.

    The reference side of the Fréchet distance is the exact mixture fit. With
    no few-shot set (source-domain evaluation) memorization is reported as 0.
    """
    coverage = mode_coverage(samples, spec, config.r_sigmas)
    if fewshot is None:
        memorized = 0.0
    else:
        eps = config.memorization_eps or default_memorization_radius(spec)
        memorized = memorization(samples, fewshot, eps)
    return MetricsReport(
        frechet_distance=frechet_distance(fit_gaussian(samples), GaussianFit.from_mixture(spec)),
        diversity=diversity(samples, config.n_pairs, config.seed),
        mode_coverage=coverage.coverage,
        high_quality_fraction=coverage.high_quality_fraction,
        memorization_fraction=memorized,
        n_samples=int(samples.shape[0]),
        seed=config.seed,
    )


def evaluate_checkpoint(checkpoint: Checkpoint, spec: GaussianMixtureSpec, config: EvalConfig, fewshot: Optional[FewShotSet] = None) -> MetricsReport:
    rng = np.random.default_rng(config.seed)
    samples = generate_samples(checkpoint.g_spec, checkpoint.theta_g, config.n_samples, rng)
    return evaluate_samples(samples, spec, config, fewshot)
