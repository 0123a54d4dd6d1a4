import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np
from tqdm import tqdm

from ..autodiff import Tape, Tensor, ops
from ..datasets import GaussianMixtureSpec, sample
from ..errors import DivergenceError, NonFiniteError
from ..metrics import EvalConfig, evaluate_samples
from ..models import Checkpoint, MlpSpec, ParamVector, config_digest, generate, generate_samples, init_params, sample_latent
from .config import LossVariant, TrainConfig
from .losses import d_loss, g_loss
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Regularizer:
    """Extra loss term weight * penalty(theta) added to one network's objective."""

    weight: float
    penalty: Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    d_loss: float
    g_loss: float
    penalty: float = 0.0
    total_g_loss: float = 0.0


@dataclass(eq=False)
class TrainState:
    """Everything one alternating G/D run mutates."""

    g_spec: MlpSpec
    d_spec: MlpSpec
    theta_g: np.ndarray
    theta_d: np.ndarray
    opt_g: Adam
    opt_d: Adam
    rng: np.random.Generator
    batch_size: int
    loss: LossVariant = "non_saturating"
    d_steps: int = 1
    iteration: int = 0
    history: list[StepRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, config: TrainConfig) -> "TrainState":
        g_seed, d_seed, latent_seed, _ = np.random.SeedSequence(config.seed).spawn(4)
        g_spec, d_spec = config.g_spec(), config.d_spec()
        return cls(
            g_spec=g_spec,
            d_spec=d_spec,
            theta_g=init_params(g_spec, np.random.default_rng(g_seed)).values.copy(),
            theta_d=init_params(d_spec, np.random.default_rng(d_seed)).values.copy(),
            opt_g=Adam(g_spec.n_params, config.lr_g, config.beta1, config.beta2),
            opt_d=Adam(d_spec.n_params, config.lr_d, config.beta1, config.beta2),
            rng=np.random.default_rng(latent_seed),
            batch_size=config.batch_size,
            loss=config.loss,
            d_steps=config.d_steps,
        )

    @classmethod
    def from_checkpoint(
        cls,
        checkpoint: Checkpoint,
        lr_g: float,
        lr_d: float,
        beta1: float,
        beta2: float,
        rng: Union[int, np.random.Generator],
        batch_size: int,
        loss: LossVariant = "non_saturating",
        d_steps: int = 1,
        restore_optimizer: bool = False,
    ) -> "TrainState":
        """Start (or continue) training from saved parameters.

        With restore_optimizer the saved Adam moments and iteration count are
        reused; otherwise both optimizers start fresh.
        """
        opt_g = Adam(checkpoint.g_spec.n_params, lr_g, beta1, beta2)
        opt_d = Adam(checkpoint.d_spec.n_params, lr_d, beta1, beta2)
        if restore_optimizer:
            opt_g.restore(checkpoint.optimizer_g)
            opt_d.restore(checkpoint.optimizer_d)
        return cls(
            g_spec=checkpoint.g_spec,
            d_spec=checkpoint.d_spec,
            theta_g=checkpoint.theta_g.values.copy(),
            theta_d=checkpoint.theta_d.values.copy(),
            opt_g=opt_g,
            opt_d=opt_d,
            rng=rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng),
            batch_size=batch_size,
            loss=loss,
            d_steps=d_steps,
            iteration=checkpoint.iteration if restore_optimizer else 0,
        )

    def generator(self) -> ParamVector:
        return ParamVector.for_spec(self.g_spec, self.theta_g)

    def discriminator(self) -> ParamVector:
        return ParamVector.for_spec(self.d_spec, self.theta_d)

    def diagnostics(self, **extra: Any) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "theta_g_norm": float(np.linalg.norm(self.theta_g)),
            "theta_d_norm": float(np.linalg.norm(self.theta_d)),
            "last_step": self.history[-1].__dict__ if self.history else None,
            **extra,
        }

    def to_checkpoint(self, config_digest: str, seed: int, stage: str = "pretrain", parent_digest: Optional[str] = None,
                      rng_state: Optional[dict[str, Any]] = None) -> Checkpoint:
        return Checkpoint(
            g_spec=self.g_spec,
            d_spec=self.d_spec,
            theta_g=self.generator(),
            theta_d=self.discriminator(),
            config_digest=config_digest,
            iteration=self.iteration,
            seed=seed,
            stage=stage,
            parent_digest=parent_digest,
            optimizer_g=self.opt_g.snapshot(),
            optimizer_d=self.opt_d.snapshot(),
            rng_state={"latent": self.rng.bit_generator.state, **(rng_state or {})},
        )


def _divergence(state: TrainState, phase: str, error: Exception, **extra: Any) -> DivergenceError:
    return DivergenceError(
        f"training diverged in the {phase} step at iteration {state.iteration + 1}: {error}",
        state.diagnostics(phase=phase, **extra),
    )


def discriminator_step(state: TrainState, real: np.ndarray, regularizer: Optional[Regularizer] = None) -> float:
    """One Adam update of D on real vs freshly generated fakes; returns the adversarial loss."""
    fake = generate(state.g_spec, state.theta_g, sample_latent(state.rng, state.batch_size, state.g_spec.input_width)).data
    try:
        tape = Tape()
        theta = tape.variable(state.theta_d, name="theta_d")
        loss = d_loss(state.d_spec, theta, real, fake)
        objective = loss
        if regularizer is not None and regularizer.weight != 0:
            objective = ops.add(loss, ops.scale(regularizer.penalty(theta), regularizer.weight))
        grad = tape.backward(objective)[theta]
    except NonFiniteError as e:
        raise _divergence(state, "discriminator", e) from e
    state.theta_d = state.opt_d.step(state.theta_d, grad, "discriminator")
    return loss.item()


def generator_step(state: TrainState, regularizer: Optional[Regularizer] = None) -> tuple[float, float, float]:
    """One Adam update of G with fresh latents.

    Returns:
        (adversarial loss, unweighted penalty, total objective). The penalty is
        still evaluated, off-tape, when the regularizer weight is zero.
    """
    z = sample_latent(state.rng, state.batch_size, state.g_spec.input_width)
    try:
        tape = Tape()
        theta = tape.variable(state.theta_g, name="theta_g")
        loss = g_loss(state.g_spec, state.d_spec, theta, state.theta_d, z, state.loss)
        objective, penalty = loss, 0.0
        if regularizer is not None:
            if regularizer.weight != 0:
                term = regularizer.penalty(theta)
                objective = ops.add(loss, ops.scale(term, regularizer.weight))
                penalty = term.item()
            else:
                penalty = regularizer.penalty(Tensor(state.theta_g)).item()
        grad = tape.backward(objective)[theta]
    except NonFiniteError as e:
        raise _divergence(state, "generator", e) from e
    state.theta_g = state.opt_g.step(state.theta_g, grad, "generator")
    return loss.item(), penalty, objective.item()


def train_step(
    state: TrainState,
    real: np.ndarray,
    g_regularizer: Optional[Regularizer] = None,
    d_regularizer: Optional[Regularizer] = None,
) -> TrainState:
    """d_steps discriminator updates on the real batch, then one generator update."""
    for _ in range(state.d_steps):
        loss_d = discriminator_step(state, real, d_regularizer)
    loss_g, penalty, total = generator_step(state, g_regularizer)
    state.iteration += 1
    state.history.append(StepRecord(state.iteration, loss_d, loss_g, penalty, total))
    if len(state.history) > 1:
        del state.history[:-1]
    return state


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    d_loss: float
    g_loss: float
    fd: float
    coverage: float
    hq_fraction: float


def pretrain(
    config: TrainConfig,
    spec: GaussianMixtureSpec,
    resume_from: Optional[Checkpoint] = None,
    on_log: Optional[Callable[[TrainRecord], None]] = None,
    on_checkpoint: Optional[Callable[[Checkpoint], None]] = None,
) -> Checkpoint:
    """Adversarial training of G and D on abundant samples of the source mixture.

    Runs until config.iterations total iterations; resuming from a checkpoint
    restores parameters, Adam moments and RNG streams so the result matches
    an uninterrupted run bit for bit.

    Raises:
        DivergenceError: If a loss or gradient becomes non-finite
    """
    digest = config_digest(config)
    _, _, _, data_seed = np.random.SeedSequence(config.seed).spawn(4)
    data_rng = np.random.default_rng(data_seed)
    if resume_from is None:
        state = TrainState.initial(config)
    else:
        state = TrainState.from_checkpoint(
            resume_from, config.lr_g, config.lr_d, config.beta1, config.beta2,
            rng=0, batch_size=config.batch_size, loss=config.loss, d_steps=config.d_steps, restore_optimizer=True,
        )
        if "latent" in resume_from.rng_state:
            state.rng.bit_generator.state = resume_from.rng_state["latent"]
        if "data" in resume_from.rng_state:
            data_rng.bit_generator.state = resume_from.rng_state["data"]
        logger.info("Resuming pretraining at iteration %d of %d", state.iteration, config.iterations)

    def snapshot() -> Checkpoint:
        return state.to_checkpoint(digest, config.seed, rng_state={"data": data_rng.bit_generator.state})

    eval_config = EvalConfig(n_samples=config.eval_samples, n_pairs=config.eval_samples, seed=config.seed)
    remaining = max(0, config.iterations - state.iteration)
    quiet = not logger.isEnabledFor(logging.INFO)
    for _ in tqdm(range(remaining), desc="pretrain", disable=quiet or remaining == 0):
        real = sample(spec, config.batch_size, data_rng)
        train_step(state, real)
        last = state.history[-1]
        logger.debug("iteration %d d_loss=%.5f g_loss=%.5f", state.iteration, last.d_loss, last.g_loss)
        if state.iteration % config.log_interval == 0 or state.iteration == config.iterations:
            eval_rng = np.random.default_rng([config.seed, state.iteration])
            report = evaluate_samples(generate_samples(state.g_spec, state.theta_g, config.eval_samples, eval_rng), spec, eval_config)
            record = TrainRecord(state.iteration, last.d_loss, last.g_loss, report.frechet_distance,
                                 report.mode_coverage, report.high_quality_fraction)
            logger.info("iteration %d: d_loss=%.4f g_loss=%.4f fd=%.4f coverage=%.3f",
                        record.iteration, record.d_loss, record.g_loss, record.fd, record.coverage)
            if on_log is not None:
                on_log(record)
        if on_checkpoint is not None and config.checkpoint_interval and state.iteration % config.checkpoint_interval == 0:
            on_checkpoint(snapshot())

    if resume_from is not None and remaining == 0:
        return resume_from
    return snapshot()
