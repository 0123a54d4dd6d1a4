from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .mixture import GaussianMixtureSpec, sample


@dataclass(frozen=True, eq=False)
class FewShotSet:
    """The k target examples an adaptation run sees, with where they came from."""

    samples: np.ndarray
    spec_id: str
    seed: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 1:
            raise InputError(f"few-shot samples must be a non-empty k x 2 array, got {samples.shape}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def k(self) -> int:
        return int(self.samples.shape[0])


def draw_few_shot(spec: GaussianMixtureSpec, k: int, seed: int) -> FewShotSet:
    if k < 1:
        raise InputError(f"few-shot size must be at least 1, got {k}")
    return FewShotSet(samples=sample(spec, k, seed), spec_id=spec.digest(), seed=seed)
