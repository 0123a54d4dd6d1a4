"""Command implementations: each stage reads its inputs from, and writes its
outputs under, one experiment output directory."""
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..adapt import adapt, ewc_penalty, fine_tune_abundant, paired_distance, paired_generate, weight_change_rate
from ..datasets import TargetTransform, apply_transform, draw_few_shot, dump_mixture_spec, export_samples_csv, sample_labeled
from ..errors import ContractError, DependencyError, DivergenceError, EwcGanError, InputError
from ..fisher import FisherDiagonal, estimate_fisher, load_fisher, per_layer_mean, save_fisher
from ..gan import pretrain
from ..metrics import GaussianFit, MetricsReport, evaluate_checkpoint, frechet_distance
from ..models import Checkpoint, file_digest, load_checkpoint, sample_latent, save_checkpoint
from .config import ExperimentConfig
from .manifest import CellSpec, RunManifest, digests_of, read_manifest, write_manifest

logger = logging.getLogger(__name__)

TRAINING_COLUMNS = ["iteration", "d_loss", "g_loss", "fd", "coverage", "hq_fraction"]
FISHER_COLUMNS = ["layer", "kind", "mean", "max", "fraction_of_total"]
METRIC_COLUMNS = ["fd", "diversity", "coverage", "hq_fraction", "memorization"]
RESULT_COLUMNS = [
    "run_id", "lambda", "shots", "seed", *METRIC_COLUMNS,
    "transform", "transform_label", "importance", "source_target_fd",
    "delta_overall", "delta_bias", "ewc_penalty", "paired_distance", "status",
]
PAIR_COLUMNS = ["source_x", "source_y", "adapted_x", "adapted_y"]
GROUP_KEYS = ["lambda", "shots", "transform", "transform_label", "importance"]
SUMMARY_METRICS = [*METRIC_COLUMNS, "delta_overall", "ewc_penalty", "paired_distance"]


@dataclass(frozen=True)
class RunLayout:
    """Paths of every artifact inside one experiment output directory."""

    root: Path

    @property
    def pretrain_dir(self) -> Path:
        return self.root / "pretrain"

    @property
    def source_checkpoint(self) -> Path:
        return self.pretrain_dir / "source.ckpt"

    @property
    def training_csv(self) -> Path:
        return self.pretrain_dir / "training.csv"

    @property
    def checkpoints_dir(self) -> Path:
        return self.pretrain_dir / "checkpoints"

    @property
    def fisher_dir(self) -> Path:
        return self.root / "fisher"

    @property
    def fisher_path(self) -> Path:
        return self.fisher_dir / "source.fisher"

    @property
    def discriminator_fisher_path(self) -> Path:
        return self.fisher_dir / "discriminator.fisher"

    @property
    def fisher_layers_csv(self) -> Path:
        return self.fisher_dir / "fisher_layers.csv"

    @property
    def cells_dir(self) -> Path:
        return self.root / "cells"

    def cell_dir(self, run_id: str) -> Path:
        return self.cells_dir / run_id

    @property
    def sweep_dir(self) -> Path:
        return self.root / "sweep"

    @property
    def weights_dir(self) -> Path:
        return self.root / "weights"

    @property
    def correspondence_dir(self) -> Path:
        return self.root / "correspondence"

    @property
    def eval_dir(self) -> Path:
        return self.root / "eval"

    @property
    def data_dir(self) -> Path:
        return self.root / "data"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    @property
    def log_path(self) -> Path:
        return self.root / "logs" / "ewcgan.log"


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def write_csv(rows: list[dict[str, Any]], columns: list[str], path: Path) -> Path:
    return write_frame(pd.DataFrame(rows, columns=columns), path)


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def _write_error(directory: Path, error: EwcGanError) -> Path:
    """divergence.json for a diverged run, error.json for any other failure."""
    name = "divergence.json" if isinstance(error, DivergenceError) else "error.json"
    doc = {"error": str(error), "type": type(error).__name__, "diagnostics": getattr(error, "diagnostics", {})}
    path = directory / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _new_manifest(config: ExperimentConfig, run_id: str, command: str, **fields: Any) -> RunManifest:
    return RunManifest(run_id=run_id, command=command, config_digest=config.digest(),
                       config=config.model_dump(mode="json"), **fields)


def _finish(manifest: RunManifest, directory: Path, root: Path, outputs: list[Path], started: float) -> Path:
    manifest.outputs = digests_of(root, outputs)
    manifest.wall_clock_seconds = time.perf_counter() - started
    return write_manifest(directory, manifest)


def require_source_checkpoint(layout: RunLayout) -> Checkpoint:
    if not layout.source_checkpoint.is_file():
        raise DependencyError(f"missing {layout.source_checkpoint}; run `ewcgan pretrain` first")
    return load_checkpoint(layout.source_checkpoint)


def require_fisher(layout: RunLayout, network: str = "generator") -> FisherDiagonal:
    path = layout.fisher_path if network == "generator" else layout.discriminator_fisher_path
    if not path.is_file():
        hint = "" if network == "generator" else " with fisher.discriminator: true"
        raise DependencyError(f"missing {path}; run `ewcgan pretrain` then `ewcgan fisher`{hint} first")
    return load_fisher(path)


def latest_checkpoint(layout: RunLayout) -> Optional[Path]:
    found = sorted(layout.checkpoints_dir.glob("iter_*.ckpt"))
    return found[-1] if found else None


def run_pretrain(config: ExperimentConfig, layout: RunLayout, resume: bool = False) -> Path:
    started = time.perf_counter()
    spec = config.source_spec()
    manifest = _new_manifest(config, "pretrain", "pretrain")
    records: list[dict[str, Any]] = []
    resume_from = None
    if resume:
        latest = latest_checkpoint(layout)
        if latest is None:
            logger.warning("No periodic checkpoint under %s; starting from scratch", layout.checkpoints_dir)
        else:
            resume_from = load_checkpoint(latest)
            manifest.inputs = digests_of(layout.root, [latest])
            logger.warning("Resuming pretraining from %s", latest)
            if layout.training_csv.is_file():
                previous = read_csv(layout.training_csv)
                records = previous[previous["iteration"] <= resume_from.iteration].to_dict("records")

    def on_checkpoint(checkpoint: Checkpoint) -> None:
        path = save_checkpoint(layout.checkpoints_dir / f"iter_{checkpoint.iteration:06d}.ckpt", checkpoint)
        write_csv(records, TRAINING_COLUMNS, layout.training_csv)
        logger.info("Wrote %s", path)

    try:
        checkpoint = pretrain(config.pretrain, spec, resume_from,
                              on_log=lambda r: records.append(asdict(r)), on_checkpoint=on_checkpoint)
    except DivergenceError as e:
        diverged = _write_error(layout.pretrain_dir, e)
        manifest.status, manifest.error = "diverged", str(e)
        _finish(manifest, layout.pretrain_dir, layout.root, [diverged], started)
        raise
    outputs = [save_checkpoint(layout.source_checkpoint, checkpoint), write_csv(records, TRAINING_COLUMNS, layout.training_csv)]
    _finish(manifest, layout.pretrain_dir, layout.root, outputs, started)
    logger.info("Pretrained source checkpoint written to %s", layout.source_checkpoint)
    return layout.source_checkpoint


def fisher_rows(fisher: FisherDiagonal) -> list[dict[str, Any]]:
    return [row._asdict() for row in per_layer_mean(fisher)]


def run_fisher(config: ExperimentConfig, layout: RunLayout) -> Path:
    started = time.perf_counter()
    source = require_source_checkpoint(layout)
    manifest = _new_manifest(config, "fisher", "fisher", inputs=digests_of(layout.root, [layout.source_checkpoint]))
    fisher = estimate_fisher(source, config.fisher.samples, config.fisher.seed, network="generator")
    outputs = [save_fisher(layout.fisher_path, fisher), write_csv(fisher_rows(fisher), FISHER_COLUMNS, layout.fisher_layers_csv)]
    if config.fisher.discriminator or config.adapt.ewc_target == "generator_and_discriminator":
        fisher_d = estimate_fisher(source, config.fisher.samples, config.fisher.seed, network="discriminator")
        outputs.append(save_fisher(layout.discriminator_fisher_path, fisher_d))
    _finish(manifest, layout.fisher_dir, layout.root, outputs, started)
    logger.info("Fisher diagonal written to %s", layout.fisher_path)
    return layout.fisher_path


def source_target_fd(config: ExperimentConfig, transform: TargetTransform) -> float:
    """Fréchet distance between the exact Gaussian fits of source and target mixtures."""
    source = config.source_spec()
    return frechet_distance(GaussianFit.from_mixture(source), GaussianFit.from_mixture(apply_transform(source, transform)))


def _cell_inputs(config: ExperimentConfig, layout: RunLayout) -> list[Path]:
    inputs = [layout.source_checkpoint, layout.fisher_path]
    if config.adapt.ewc_target == "generator_and_discriminator":
        inputs.append(layout.discriminator_fisher_path)
    return inputs


def check_cell_dependencies(config: ExperimentConfig, layout: RunLayout) -> None:
    require_source_checkpoint(layout)
    require_fisher(layout)
    if config.adapt.ewc_target == "generator_and_discriminator":
        require_fisher(layout, "discriminator")


def run_cell(
    config: ExperimentConfig,
    root: Union[str, Path],
    cell: CellSpec,
    raise_on_failure: bool = False,
    cell_root: Optional[Union[str, Path]] = None,
) -> dict[str, Any]:
    """Adapt, evaluate and record one grid point; returns its results row.

    A cell that diverges or hits any other ewcgan error still produces a row
    and a manifest (status diverged or failed, metrics NaN) unless
    raise_on_failure is set.
    """
    started = time.perf_counter()
    layout = RunLayout(Path(root))
    out = Path(cell_root) if cell_root is not None else layout.cell_dir(cell.run_id)
    out.mkdir(parents=True, exist_ok=True)
    source = require_source_checkpoint(layout)
    fisher = require_fisher(layout)
    if cell.importance == "uniform":
        fisher = fisher.as_uniform()
    fisher_d = require_fisher(layout, "discriminator") if config.adapt.ewc_target == "generator_and_discriminator" else None
    if fisher_d is not None and cell.importance == "uniform":
        fisher_d = fisher_d.as_uniform()

    source_spec = config.source_spec()
    target_spec = apply_transform(source_spec, cell.transform)
    fewshot = draw_few_shot(target_spec, cell.shots, cell.seed)
    adapt_config = config.adapt.model_copy(update={"lam": cell.lam, "seed": cell.seed})
    manifest = _new_manifest(config, cell.run_id, "adapt", cell=cell, inputs=digests_of(layout.root, _cell_inputs(config, layout)))
    row: dict[str, Any] = {
        "run_id": cell.run_id,
        "lambda": cell.lam,
        "shots": cell.shots,
        "seed": cell.seed,
        "transform": cell.transform_index,
        "transform_label": cell.transform.magnitude_label(),
        "importance": cell.importance,
    }
    try:
        row["source_target_fd"] = source_target_fd(config, cell.transform)
        adapted, drift = adapt(source, fisher, fewshot, adapt_config, fisher_d=fisher_d)
        z = sample_latent(np.random.default_rng([cell.seed, 1]), config.correspondence.n_latent, source.latent_dim)
        source_points, adapted_points = paired_generate(source, adapted, z)
        report = evaluate_checkpoint(adapted, target_spec, config.evaluation.model_copy(update={"seed": cell.seed}), fewshot)
        change = weight_change_rate(source.theta_g, adapted.theta_g, config.adapt.eps)
        scores = {
            **report.as_row(),
            "delta_overall": change.overall,
            "delta_bias": change.bias_overall,
            "ewc_penalty": ewc_penalty(adapted.theta_g, source.theta_g, fisher).item(),
            "paired_distance": paired_distance(source_points, adapted_points),
        }
    except EwcGanError as e:
        status = "diverged" if isinstance(e, DivergenceError) else "failed"
        logger.warning("Cell %s %s: %s", cell.run_id, status, e)
        row.update({c: math.nan for c in RESULT_COLUMNS if c not in row})
        row["status"] = status
        outputs = [_write_error(out, e), write_csv([row], RESULT_COLUMNS, out / "row.csv")]
        manifest.status, manifest.error = status, f"{type(e).__name__}: {e}"
        _finish(manifest, out, out, outputs, started)
        if raise_on_failure:
            raise
        return row

    row.update(scores, status="ok")
    outputs = [
        save_checkpoint(out / "adapted.ckpt", adapted),
        write_csv(drift.rows(), drift.columns(), out / "drift.csv"),
        write_frame(pd.DataFrame(np.hstack([source_points, adapted_points]), columns=PAIR_COLUMNS), out / "pairs.csv"),
        write_csv([row], RESULT_COLUMNS, out / "row.csv"),
    ]
    _finish(manifest, out, out, outputs, started)
    logger.info("Cell %s: fd=%.4f diversity=%.4f memorization=%.3f", cell.run_id, row["fd"], row["diversity"], row["memorization"])
    return row


def sweep_cells(config: ExperimentConfig) -> list[CellSpec]:
    """Cartesian product of the sweep axes, in a fixed order."""
    return [
        CellSpec(lam=lam, shots=shots, transform_index=index, transform=transform, importance=importance, seed=seed)
        for lam in config.sweep.lambdas
        for shots in config.sweep.shots
        for index, transform in enumerate(config.transforms())
        for importance in config.sweep.importance
        for seed in config.sweep.seeds
    ]


def single_cell(config: ExperimentConfig, lam: Optional[float] = None, seed: Optional[int] = None) -> CellSpec:
    """The cell the adapt command runs: first ladder transform (the target unless a ladder is declared)."""
    return CellSpec(
        lam=config.adapt.lam if lam is None else lam,
        shots=config.shots,
        transform_index=0,
        transform=config.transforms()[0],
        importance="estimated",
        seed=config.adapt.seed if seed is None else seed,
    )


def run_cells(config: ExperimentConfig, layout: RunLayout, cells: list[CellSpec], workers: int = 1) -> list[dict[str, Any]]:
    """Run independent cells over a bounded process pool; rows come back in cell order."""
    check_cell_dependencies(config, layout)
    rows: list[Optional[dict[str, Any]]] = [None] * len(cells)
    quiet = not logger.isEnabledFor(logging.INFO)
    if workers <= 1 or len(cells) <= 1:
        for i, cell in enumerate(tqdm(cells, desc="cells", disable=quiet)):
            rows[i] = run_cell(config, str(layout.root), cell)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as executor:
            futures = {executor.submit(run_cell, config, str(layout.root), cell): i for i, cell in enumerate(cells)}
            for future in tqdm(as_completed(futures), total=len(futures), desc="cells", disable=quiet):
                rows[futures[future]] = future.result()
    return [row for row in rows if row is not None]


def run_adapt(config: ExperimentConfig, layout: RunLayout) -> Path:
    check_cell_dependencies(config, layout)
    cell = single_cell(config)
    run_cell(config, str(layout.root), cell, raise_on_failure=True)
    return layout.cell_dir(cell.run_id)


def summarize(results: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error over seeds for every (lambda, shots, transform, importance) group."""
    counts = results.groupby(GROUP_KEYS, sort=True)["seed"].count().rename("n_runs")
    keys = [results[k] for k in GROUP_KEYS]
    diverged = (results["status"] == "diverged").groupby(keys, sort=True).sum().rename("n_diverged")
    failed = (results["status"] == "failed").groupby(keys, sort=True).sum().rename("n_failed")
    ok = results[results["status"] == "ok"]
    grouped = ok.groupby(GROUP_KEYS, sort=True)[SUMMARY_METRICS]
    means = grouped.mean().add_suffix("_mean")
    sems = grouped.sem().fillna(0.0).add_suffix("_sem")
    summary = pd.concat([counts, diverged, failed, means, sems], axis=1)
    ordered = ["n_runs", "n_diverged", "n_failed"] + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "sem")]
    return summary.reindex(columns=ordered).reset_index()


def source_reference_rows(config: ExperimentConfig, source: Checkpoint) -> list[dict[str, Any]]:
    """The unadapted source generator scored against the source and against every target."""
    rows = []
    source_spec = config.source_spec()
    targets = [("source", source_spec, 0.0)] + [
        (f"target_t{i}", apply_transform(source_spec, t), source_target_fd(config, t))
        for i, t in enumerate(config.transforms())
    ]
    for against, spec, dissimilarity in targets:
        report: MetricsReport = evaluate_checkpoint(source, spec, config.evaluation)
        rows.append({"against": against, **report.as_row(), "source_target_fd": dissimilarity})
    return rows


REFERENCE_COLUMNS = ["against", *METRIC_COLUMNS, "source_target_fd"]


def run_sweep(config: ExperimentConfig, layout: RunLayout, workers: int = 1) -> Path:
    started = time.perf_counter()
    cells = sweep_cells(config)
    logger.info("Sweeping %d cells with %d workers", len(cells), workers)
    rows = run_cells(config, layout, cells, workers)
    results = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    results_path = write_frame(results, layout.sweep_dir / "results.csv")
    summary_path = write_frame(summarize(results), layout.sweep_dir / "summary.csv")
    reference_path = write_csv(source_reference_rows(config, require_source_checkpoint(layout)), REFERENCE_COLUMNS,
                               layout.sweep_dir / "source_reference.csv")
    manifest = _new_manifest(config, "sweep", "sweep", inputs=digests_of(layout.root, _cell_inputs(config, layout)))
    _finish(manifest, layout.sweep_dir, layout.root, [results_path, summary_path, reference_path], started)
    logger.info("Sweep results written to %s", results_path)
    return results_path


def run_eval(config: ExperimentConfig, layout: RunLayout, checkpoint: Optional[str] = None) -> Path:
    """Score the source generator (default) or a given checkpoint against the configured target."""
    if checkpoint is None:
        rows = source_reference_rows(config, require_source_checkpoint(layout))
        return write_csv(rows, REFERENCE_COLUMNS, layout.eval_dir / "source_reference.csv")
    path = Path(checkpoint)
    if not path.is_file():
        raise DependencyError(f"missing checkpoint {path}")
    report = evaluate_checkpoint(load_checkpoint(path), config.target_spec(config.transforms()[0]), config.evaluation)
    row = {"checkpoint": str(path), "digest": file_digest(path), **report.as_row()}
    return write_csv([row], ["checkpoint", "digest", *METRIC_COLUMNS], layout.eval_dir / f"{path.stem}.csv")


CORRESPONDENCE_COLUMNS = ["run_id", "lambda", "seed", "paired_distance", "fd", "diversity", "memorization", "status"]


def run_correspondence(config: ExperimentConfig, layout: RunLayout, workers: int = 1) -> Path:
    cells = [single_cell(config, lam=lam, seed=seed) for lam in config.correspondence_lambdas() for seed in config.sweep.seeds]
    rows = run_cells(config, layout, cells, workers)
    path = write_csv([{k: row[k] for k in CORRESPONDENCE_COLUMNS} for row in rows], CORRESPONDENCE_COLUMNS,
                     layout.correspondence_dir / "correspondence.csv")
    logger.info("Correspondence distances written to %s", path)
    return path


DELTA_COLUMNS = ["layer", "delta", "bias_delta", "fisher_mean", "fisher_bias_mean"]


def run_analyze_weights(config: ExperimentConfig, layout: RunLayout) -> Path:
    """Abundant-data fine-tune without EWC, then per-layer drift next to per-layer Fisher."""
    started = time.perf_counter()
    source = require_source_checkpoint(layout)
    fisher = require_fisher(layout)
    target = apply_transform(config.source_spec(), config.transforms()[0])
    tune_config = config.adapt.model_copy(update={"lam": 0.0, "iterations": config.analysis.iterations, "seed": config.analysis.seed})
    tuned, drift = fine_tune_abundant(source, target, tune_config, batch_size=config.analysis.batch_size)
    change = weight_change_rate(source.theta_g, tuned.theta_g, config.adapt.eps)
    means = {(row.layer, row.kind): row.mean for row in per_layer_mean(fisher)}
    rows = [
        {
            "layer": layer,
            "delta": change.per_layer[layer],
            "bias_delta": change.bias_per_layer.get(layer, math.nan),
            "fisher_mean": means[(layer, "weight")],
            "fisher_bias_mean": means.get((layer, "bias"), math.nan),
        }
        for layer in change.per_layer
    ]
    manifest = _new_manifest(config, "analyze-weights", "analyze-weights", inputs=digests_of(layout.root, [layout.source_checkpoint, layout.fisher_path]))
    outputs = [
        save_checkpoint(layout.weights_dir / "fine_tuned.ckpt", tuned),
        write_csv(drift.rows(), drift.columns(), layout.weights_dir / "drift.csv"),
        write_csv(rows, DELTA_COLUMNS, layout.weights_dir / "delta_layers.csv"),
    ]
    _finish(manifest, layout.weights_dir, layout.root, outputs, started)
    return layout.weights_dir / "delta_layers.csv"


def run_sample(config: ExperimentConfig, layout: RunLayout, n: int = 1000, domain: str = "source", seed: int = 0) -> Path:
    """Export labelled points of the source or target mixture, with the mixture itself as YAML."""
    if domain == "source":
        spec = config.source_spec()
    elif domain == "target":
        spec = config.target_spec(config.transforms()[0])
    else:
        raise InputError(f"domain must be 'source' or 'target', got {domain!r}")
    points, labels = sample_labeled(spec, n, seed)
    dump_mixture_spec(spec, layout.data_dir / f"{domain}.yaml")
    return export_samples_csv(points, labels, layout.data_dir / f"{domain}.csv")


def rerun_cell(manifest_path: Union[str, Path], layout: RunLayout) -> dict[str, Any]:
    """Recompute one cell from its manifest and verify the checkpoint and row are bit-identical.

    Raises:
        DependencyError: If an input artifact changed since the cell ran
        ContractError: If the recomputed outputs differ
    """
    manifest = read_manifest(manifest_path)
    if manifest.cell is None:
        raise InputError(f"manifest {manifest_path} does not describe an adaptation cell")
    config = ExperimentConfig.model_validate(manifest.config)
    if config.digest() != manifest.config_digest:
        raise ContractError(f"config stored in {manifest_path} does not match its digest")
    for name, digest in manifest.inputs.items():
        path = layout.root / name
        if not path.is_file() or file_digest(path) != digest:
            raise DependencyError(f"input {path} is missing or changed since {manifest.run_id} ran")
    out = layout.root / "rerun" / manifest.run_id
    run_cell(config, str(layout.root), manifest.cell, cell_root=out)
    checks = {name: file_digest(out / name) == manifest.outputs.get(name) for name in ("adapted.ckpt", "row.csv")}
    if not all(checks.values()):
        raise ContractError(f"rerun of {manifest.run_id} differs from the recorded outputs: {checks}")
    logger.info("Rerun of %s reproduced %s bit for bit", manifest.run_id, ", ".join(sorted(checks)))
    return {"run_id": manifest.run_id, **checks}
