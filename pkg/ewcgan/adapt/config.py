from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..gan import LossVariant

EwcTarget = Literal["generator_only", "generator_and_discriminator"]

DEFAULT_LAMBDA_GRID: tuple[float, ...] = (0.0, 1.0, 10.0, 1e2, 1e3, 1e4)


class AdaptConfig(BaseModel):
    """Few-shot adaptation settings.

    batch_size None (or any value up to k) trains on the whole few-shot set
    each step; larger batches resample it with replacement.
    """

    lam: float = Field(0.0, ge=0)
    iterations: int = Field(2000, ge=0)
    lr_g: float = Field(2e-4, ge=0)
    lr_d: float = Field(2e-4, ge=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    batch_size: Optional[int] = Field(None, ge=1)
    d_steps: int = Field(1, ge=1)
    loss: LossVariant = "non_saturating"
    seed: int = 0
    ewc_target: EwcTarget = "generator_only"
    drift_interval: int = Field(100, ge=1)
    eps: float = Field(1e-8, gt=0)
