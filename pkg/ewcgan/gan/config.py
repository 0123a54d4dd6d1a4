from typing import Literal

from pydantic import BaseModel, Field

from ..autodiff.ops import DEFAULT_LEAK
from ..models import MlpSpec, discriminator_spec, generator_spec

LossVariant = Literal["minimax", "non_saturating"]


class TrainConfig(BaseModel):
    """Source-domain pretraining settings."""

    iterations: int = Field(20000, ge=1)
    batch_size: int = Field(128, ge=1)
    lr_g: float = Field(2e-4, ge=0)
    lr_d: float = Field(2e-4, ge=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    latent_dim: int = Field(4, ge=1)
    g_hidden: tuple[int, ...] = (64, 64)
    d_hidden: tuple[int, ...] = (64, 64)
    leak: float = Field(DEFAULT_LEAK, ge=0)
    d_steps: int = Field(1, ge=1)
    loss: LossVariant = "non_saturating"
    seed: int = 0
    checkpoint_interval: int = Field(1000, ge=0)
    log_interval: int = Field(100, ge=1)
    eval_samples: int = Field(2000, ge=2)

    def g_spec(self) -> MlpSpec:
        return generator_spec(self.latent_dim, self.g_hidden, self.leak)

    def d_spec(self) -> MlpSpec:
        return discriminator_spec(self.d_hidden, self.leak)
