import logging
from typing import Callable, Union

import numpy as np
from tqdm import tqdm

from ..autodiff import Tape, Tensor, ops
from ..errors import EstimationError, InputError, NonFiniteError
from ..models import Checkpoint, discriminate, generate, sample_latent
from .diagonal import FisherDiagonal, Network

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 5000

PerSampleLoss = Callable[[Tensor, np.ndarray], Tensor]


def empirical_fisher(per_sample_loss: PerSampleLoss, theta: np.ndarray, inputs: np.ndarray,
                     loss_scale: float = 1.0, desc: str = "fisher") -> np.ndarray:
    """Mean of squared per-sample gradients of a log-likelihood proxy.

    Each row of ``inputs`` gets its own tape, so the squared quantity is a
    single-sample gradient rather than a batch mean. Accumulation runs in row
    order, which keeps the result bitwise reproducible.

    Args:
        per_sample_loss: Maps (theta on a tape, one input row as a 1×d batch) to a scalar
        theta: Parameters the gradient is taken against
        inputs: One row per sample
        loss_scale: Constant multiplier applied to every per-sample loss

    Raises:
        InputError: If there are no inputs
        EstimationError: If any gradient is not finite
    """
    n = len(inputs)
    if n == 0:
        raise InputError("Fisher estimation needs at least one sample")
    acc = np.zeros_like(theta, dtype=np.float64)
    quiet = not logger.isEnabledFor(logging.INFO)
    for m in tqdm(range(n), desc=desc, disable=quiet or n < 100):
        try:
            tape = Tape()
            th = tape.variable(theta, name="theta")
            loss = per_sample_loss(th, inputs[m:m + 1])
            if loss_scale != 1.0:
                loss = ops.scale(loss, loss_scale)
            grad = tape.backward(loss)[th]
        except NonFiniteError as e:
            raise EstimationError(f"non-finite value at Fisher sample {m}: {e}") from e
        if not np.all(np.isfinite(grad)):
            raise EstimationError(f"non-finite gradient at Fisher sample {m}")
        acc += grad * grad
    return acc / n


def log_likelihood_proxy(checkpoint: Checkpoint, network: Network = "generator") -> PerSampleLoss:
    """-BCE(D(x), 1) with the other network frozen at its checkpoint values.

    For the generator x = G_theta(z); for the discriminator x = G_frozen(z)
    and D is the network under differentiation.
    """
    if network == "generator":
        def loss(theta: Tensor, z: np.ndarray) -> Tensor:
            logits = discriminate(checkpoint.d_spec, checkpoint.theta_d, generate(checkpoint.g_spec, theta, z))
            return ops.scale(ops.bce_with_logits(logits, 1.0), -1.0)
    elif network == "discriminator":
        def loss(theta: Tensor, z: np.ndarray) -> Tensor:
            fake = generate(checkpoint.g_spec, checkpoint.theta_g, z).data
            return ops.scale(ops.bce_with_logits(discriminate(checkpoint.d_spec, theta, fake), 1.0), -1.0)
    else:
        raise InputError(f"unknown network {network!r}")
    return loss


def estimate_fisher(
    checkpoint: Checkpoint,
    samples: int = DEFAULT_SAMPLES,
    seed: Union[int, np.random.Generator] = 0,
    network: Network = "generator",
    loss_scale: float = 1.0,
) -> FisherDiagonal:
    """Diagonal empirical Fisher of one network of a checkpoint, using the frozen discriminator as likelihood.

    Latent draws come from a single ``standard_normal((samples, latent_dim))``
    call, so the first M draws for a seed are the same for every larger M.
    """
    if samples < 1:
        raise InputError(f"Fisher sample count must be at least 1, got {samples}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = sample_latent(rng, samples, checkpoint.latent_dim)
    theta = checkpoint.theta_g if network == "generator" else checkpoint.theta_d
    logger.info("Estimating %s Fisher from %d samples", network, samples)
    values = empirical_fisher(log_likelihood_proxy(checkpoint, network), theta.values, z, loss_scale, desc=f"fisher[{network}]")
    return FisherDiagonal(
        values=values,
        layout=theta.layout,
        samples=samples,
        seed=seed if isinstance(seed, int) else 0,
        source_digest=checkpoint.digest(),
        network=network,
    )
