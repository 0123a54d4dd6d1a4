import logging
import os
import sys
from pathlib import Path
from typing import Optional

import fire
from dotenv import load_dotenv

from ..errors import DivergenceError, EwcGanError
from .config import ExperimentConfig, load_experiment_config, resolve_output_dir, resolve_workers
from .logs import setup_logging
from .pipeline import (
    RunLayout,
    rerun_cell,
    run_adapt,
    run_analyze_weights,
    run_correspondence,
    run_eval,
    run_fisher,
    run_pretrain,
    run_sample,
    run_sweep,
)
from .report import build_report

logger = logging.getLogger(__name__)


def _prepare(config: Optional[str], out: Optional[str], seed: Optional[int]) -> tuple[ExperimentConfig, RunLayout]:
    experiment = load_experiment_config(config)
    if seed is not None:
        experiment = experiment.with_seed(int(seed))
    layout = RunLayout(resolve_output_dir(experiment, out))
    setup_logging(os.getenv("EWCGAN_LOG_LEVEL", "INFO"), layout.log_path)
    logger.info("Experiment %s (config digest %s) -> %s", experiment.name, experiment.digest()[:12], layout.root)
    return experiment, layout


class Commands:
    """Few-shot GAN adaptation with elastic weight consolidation.

    Every command takes --config (YAML experiment file) and --out (output
    directory); --seed overrides every seed in the config.
    """

    def pretrain(self, config: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None, resume: bool = False) -> str:
        """Train the source GAN; --resume continues from the latest periodic checkpoint."""
        experiment, layout = _prepare(config, out, seed)
        return str(run_pretrain(experiment, layout, resume=resume))

    def fisher(self, config: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None) -> str:
        """Estimate the diagonal Fisher information of the source generator."""
        experiment, layout = _prepare(config, out, seed)
        return str(run_fisher(experiment, layout))

    def adapt(self, config: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None) -> str:
        """Adapt the source generator to the configured few-shot target."""
        experiment, layout = _prepare(config, out, seed)
        return str(run_adapt(experiment, layout))

    def eval(self, config: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None, checkpoint: Optional[str] = None) -> str:
        """Score the source generator, or --checkpoint against the target."""
        experiment, layout = _prepare(config, out, seed)
        return str(run_eval(experiment, layout, checkpoint))

    def sweep(self, config: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None, workers: Optional[int] = None) -> str:
        """Adapt every cell of the configured grid and consolidate the results."""
        experiment, layout = _prepare(config, out, seed)
        return str(run_sweep(experiment, layout, resolve_workers(experiment, workers)))

    def correspondence(self, config: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None, workers: Optional[int] = None) -> str:
        """Compare source and adapted outputs on shared latent codes across lambdas."""
        experiment, layout = _prepare(config, out, seed)
        return str(run_correspondence(experiment, layout, resolve_workers(experiment, workers)))

    def analyze_weights(self, config: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None) -> str:
        """Per-layer weight change after abundant-data fine-tuning, next to per-layer Fisher."""
        experiment, layout = _prepare(config, out, seed)
        return str(run_analyze_weights(experiment, layout))

    def report(self, run_dir: Optional[str] = None, config: Optional[str] = None, out: Optional[str] = None) -> str:
        """Write SVG figures and summary.md for an output directory."""
        if run_dir is None:
            experiment = load_experiment_config(config)
            run_dir = str(resolve_output_dir(experiment, out))
        return str(build_report(Path(run_dir)))

    def rerun(self, manifest: str, out: Optional[str] = None) -> dict:
        """Recompute one sweep cell from its manifest.json and verify it matches."""
        path = Path(manifest)
        root = Path(out) if out else (path if path.is_dir() else path.parent).parent.parent
        return rerun_cell(path, RunLayout(root))

    def sample(self, config: Optional[str] = None, out: Optional[str] = None, n: int = 1000, domain: str = "source", seed: int = 0) -> str:
        """Export labelled points of the source or target mixture as CSV."""
        experiment, layout = _prepare(config, out, None)
        return str(run_sample(experiment, layout, n=n, domain=domain, seed=seed))


def _normalize(argv: list[str]) -> list[str]:
    if argv and not argv[0].startswith("-"):
        return [argv[0].replace("-", "_"), *argv[1:]]
    return argv


def main(argv: Optional[list[str]] = None) -> int:
    """Console entry point; returns the process exit code."""
    load_dotenv()
    setup_logging(os.getenv("EWCGAN_LOG_LEVEL", "INFO"))
    args = _normalize(list(sys.argv[1:] if argv is None else argv))
    try:
        fire.Fire(Commands, command=args, name="ewcgan")
    except DivergenceError as e:
        logger.error("%s; diagnostics: %s", e, e.diagnostics)
        return e.exit_code
    except EwcGanError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except fire.core.FireExit as e:
        return int(e.code or 0)
    except Exception:
        logger.exception("Unexpected failure")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
