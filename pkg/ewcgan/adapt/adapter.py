import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from ..datasets import FewShotSet, GaussianMixtureSpec, sample
from ..errors import ContractError
from ..fisher import FisherDiagonal
from ..gan import Regularizer, TrainState, train_step
from ..models import Checkpoint, config_digest, generate
from .config import AdaptConfig
from .ewc import ewc_penalty, weight_change_rate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriftRecord:
    iteration: int
    delta_overall: float
    delta_layers: tuple[float, ...]
    ewc_penalty: float
    d_loss: float
    g_loss: float
    total_g_loss: float


@dataclass
class DriftLog:
    """Generator drift away from the source weights, sampled every drift_interval iterations."""

    lam: float
    layers: tuple[str, ...] = ()
    records: list[DriftRecord] = field(default_factory=list)

    def append(self, record: DriftRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ContractError("drift records must be appended in iteration order")
        self.records.append(record)

    def columns(self) -> list[str]:
        """iteration, delta_overall, delta_layer_0..n, ewc_penalty, d_loss, g_loss, total_g_loss."""
        return ["iteration", "delta_overall", *(f"delta_{name}" for name in self.layers),
                "ewc_penalty", "d_loss", "g_loss", "total_g_loss"]

    def rows(self) -> list[dict[str, float]]:
        out = []
        for r in self.records:
            row = {"iteration": r.iteration, "delta_overall": r.delta_overall}
            row.update({f"delta_{name}": value for name, value in zip(self.layers, r.delta_layers)})
            row.update(ewc_penalty=r.ewc_penalty, d_loss=r.d_loss, g_loss=r.g_loss, total_g_loss=r.total_g_loss)
            out.append(row)
        return out

    @property
    def final(self) -> Optional[DriftRecord]:
        return self.records[-1] if self.records else None


def _run(
    source: Checkpoint,
    config: AdaptConfig,
    draw_real: Callable[[], np.ndarray],
    real_batch: int,
    g_regularizer: Regularizer,
    d_regularizer: Optional[Regularizer],
    data_state: Callable[[], dict],
    stage: str,
    on_log: Optional[Callable[[DriftRecord], None]],
    latent_rng: np.random.Generator,
) -> tuple[Checkpoint, DriftLog]:
    state = TrainState.from_checkpoint(
        source, config.lr_g, config.lr_d, config.beta1, config.beta2,
        rng=latent_rng, batch_size=real_batch, loss=config.loss, d_steps=config.d_steps,
    )
    log = DriftLog(lam=config.lam, layers=tuple(e.layer for e in source.theta_g.layout if e.kind == "weight"))
    quiet = not logger.isEnabledFor(logging.INFO)
    for _ in tqdm(range(config.iterations), desc=stage, disable=quiet or config.iterations < 100):
        train_step(state, draw_real(), g_regularizer, d_regularizer)
        i = state.iteration
        if i % config.drift_interval == 0 or i == config.iterations:
            step = state.history[-1]
            change = weight_change_rate(source.theta_g, state.generator(), config.eps)
            record = DriftRecord(
                iteration=i,
                delta_overall=change.overall,
                delta_layers=tuple(change.per_layer[name] for name in log.layers),
                ewc_penalty=step.penalty,
                d_loss=step.d_loss,
                g_loss=step.g_loss,
                total_g_loss=step.total_g_loss,
            )
            log.append(record)
            logger.debug("%s iteration %d: delta=%.4g penalty=%.4g g_loss=%.4f", stage, i, record.delta_overall,
                         record.ewc_penalty, record.g_loss)
            if on_log is not None:
                on_log(record)
    checkpoint = state.to_checkpoint(config_digest(config), config.seed, stage=stage,
                                     parent_digest=source.digest(), rng_state=data_state())
    return checkpoint, log


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    latent_seed, data_seed = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(latent_seed), np.random.default_rng(data_seed)


def adapt(
    source: Checkpoint,
    fisher: FisherDiagonal,
    fewshot: FewShotSet,
    config: AdaptConfig,
    fisher_d: Optional[FisherDiagonal] = None,
    on_log: Optional[Callable[[DriftRecord], None]] = None,
) -> tuple[Checkpoint, DriftLog]:
    """Fine-tune a source checkpoint on k examples under the EWC-regularized generator loss.

    The generator minimizes g_loss + lam * ewc_penalty(theta_G, theta_S,G, F);
    the discriminator trains adversarially on the few-shot set as reals, with
    its own EWC term only when ewc_target is generator_and_discriminator. At
    lam = 0 the run is the plain fine-tuning path of gan.train_step.

    Raises:
        ContractError: If F does not match the source generator, or D-side EWC lacks fisher_d
        DivergenceError: If training stops being finite
    """
    if not fisher.aligned_with(source.theta_g):
        raise ContractError("Fisher diagonal does not match the source generator layout")
    anchor_g = source.theta_g
    g_regularizer = Regularizer(config.lam, lambda theta: ewc_penalty(theta, anchor_g, fisher))
    d_regularizer = None
    if config.ewc_target == "generator_and_discriminator":
        if fisher_d is None or not fisher_d.aligned_with(source.theta_d):
            raise ContractError("discriminator EWC needs a Fisher diagonal of the source discriminator")
        anchor_d = source.theta_d
        d_regularizer = Regularizer(config.lam, lambda theta: ewc_penalty(theta, anchor_d, fisher_d))

    latent_rng, data_rng = _streams(config.seed)
    k = fewshot.k
    if config.batch_size is None or config.batch_size <= k:
        real_batch = k

        def draw_real() -> np.ndarray:
            return fewshot.samples
    else:
        real_batch = config.batch_size

        def draw_real() -> np.ndarray:
            return fewshot.samples[data_rng.integers(0, k, size=real_batch)]

    logger.info("Adapting on %d examples with lambda=%g for %d iterations", k, config.lam, config.iterations)
    return _run(source, config, draw_real, real_batch, g_regularizer, d_regularizer,
                lambda: {"data": data_rng.bit_generator.state}, "adapt", on_log, latent_rng)


def fine_tune_abundant(
    source: Checkpoint,
    target: GaussianMixtureSpec,
    config: AdaptConfig,
    batch_size: int = 128,
    on_log: Optional[Callable[[DriftRecord], None]] = None,
) -> tuple[Checkpoint, DriftLog]:
    """Unregularized fine-tuning on fresh target samples every step (the data-rich regime)."""
    anchor_g = source.theta_g
    unit = FisherDiagonal.uniform(anchor_g.layout, 1.0)
    g_regularizer = Regularizer(0.0, lambda theta: ewc_penalty(theta, anchor_g, unit))
    latent_rng, data_rng = _streams(config.seed)

    def draw_real() -> np.ndarray:
        return sample(target, batch_size, data_rng)

    logger.info("Fine-tuning on abundant target samples for %d iterations", config.iterations)
    return _run(source, config, draw_real, batch_size, g_regularizer, None,
                lambda: {"data": data_rng.bit_generator.state}, "fine_tune", on_log, latent_rng)


def paired_generate(source: Checkpoint, adapted: Checkpoint, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run both generators on the same latent rows; outputs stay row-aligned."""
    if source.g_spec != adapted.g_spec:
        raise ContractError("paired generation needs generators with identical specs")
    return generate(source.g_spec, source.theta_g, z).data, generate(adapted.g_spec, adapted.theta_g, z).data


def paired_distance(source_points: np.ndarray, adapted_points: np.ndarray) -> float:
    """Mean row-wise Euclidean distance between paired outputs."""
    distance = float(np.mean(np.linalg.norm(adapted_points - source_points, axis=1)))
    logger.info("Mean paired distance: %.6f", distance)
    return distance
