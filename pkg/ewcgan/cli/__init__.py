from .config import ExperimentConfig, load_experiment_config, resolve_output_dir, resolve_workers
from .logs import setup_logging
from .main import Commands, main
from .manifest import CellSpec, RunManifest, read_manifest, write_manifest
from .pipeline import RunLayout, run_cell, summarize, sweep_cells
from .report import build_report
