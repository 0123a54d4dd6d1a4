from typing import Union

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..errors import DimensionError, InputError
from ..models import MlpSpec, discriminate, generate
from ..models.network import Params
from .config import LossVariant


def d_loss(spec_d: MlpSpec, theta_d: Params, real: Union[Tensor, np.ndarray], fake: Union[Tensor, np.ndarray]) -> Tensor:
    """BCE(D(real), 1) + BCE(D(fake), 0): the negated discriminator objective."""
    real, fake = as_tensor(real), as_tensor(fake)
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise InputError("discriminator loss needs non-empty real and fake batches")
    if real.data.ndim != 2 or fake.data.ndim != 2 or real.shape[1] != fake.shape[1]:
        raise DimensionError(f"real batch {real.shape} and fake batch {fake.shape} differ in width")
    return ops.add(
        ops.bce_with_logits(discriminate(spec_d, theta_d, real), 1.0),
        ops.bce_with_logits(discriminate(spec_d, theta_d, fake), 0.0),
    )


def g_loss(
    spec_g: MlpSpec,
    spec_d: MlpSpec,
    theta_g: Params,
    theta_d: Params,
    z: Union[Tensor, np.ndarray],
    variant: LossVariant = "non_saturating",
) -> Tensor:
    """Generator loss on latent batch z.

    non_saturating: BCE(D(G(z)), 1). minimax: -BCE(D(G(z)), 0), i.e. the
    generator minimizes E[log(1 - D(G(z)))] directly.
    """
    logits = discriminate(spec_d, theta_d, generate(spec_g, theta_g, z))
    if variant == "non_saturating":
        return ops.bce_with_logits(logits, 1.0)
    if variant == "minimax":
        return ops.scale(ops.bce_with_logits(logits, 0.0), -1.0)
    raise InputError(f"unknown loss variant {variant!r}")
