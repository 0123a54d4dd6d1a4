import json
import shutil
from pathlib import Path

import pandas as pd
import pytest
import yaml

from ewcgan.cli import ExperimentConfig, load_experiment_config, main, read_manifest, resolve_output_dir, resolve_workers
from ewcgan.cli import pipeline
from ewcgan.cli.manifest import CellSpec
from ewcgan.cli.pipeline import RESULT_COLUMNS, RunLayout, read_csv, summarize, sweep_cells
from ewcgan.cli.report import drift_figure, drift_series, layer_bar_figure
from ewcgan.datasets import TargetTransform, default_target_ladder
from ewcgan.errors import NumericError, UsageError
from ewcgan.fisher import load_fisher, per_layer_mean
from ewcgan.models import file_digest

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

TINY = {
    "name": "tiny",
    "shots": 5,
    "pretrain": {
        "iterations": 20, "batch_size": 16, "latent_dim": 2, "g_hidden": [8], "d_hidden": [8],
        "checkpoint_interval": 10, "log_interval": 10, "eval_samples": 64,
    },
    "fisher": {"samples": 16},
    "adapt": {"lam": 10.0, "iterations": 6, "drift_interval": 3},
    "evaluation": {"n_samples": 100, "n_pairs": 100},
    "sweep": {"lambdas": [0.0, 10.0], "shots": [5], "seeds": [0, 1]},
    "correspondence": {"n_latent": 20},
    "analysis": {"iterations": 6, "batch_size": 16},
    "workers": 1,
}


def _write_config(directory: Path, doc: dict) -> Path:
    path = directory / "tiny.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    config = _write_config(base, TINY)
    root = base / "out"
    for command in ("pretrain", "fisher", "sweep", "correspondence", "analyze-weights"):
        assert main([command, "--config", str(config), "--out", str(root)]) == 0, command
    return config, root


def test_missing_config_is_usage_error(tmp_path):
    out = tmp_path / "out"
    assert main(["pretrain", "--config", str(tmp_path / "missing.yaml"), "--out", str(out)]) == 2
    assert not out.exists()


@pytest.mark.parametrize("doc", [
    {"pretrain": {"iterations": -5}},
    {"unknown_section": 1},
    {"sweep": {"lambdas": [-1.0]}},
    ["not", "a", "mapping"],
])
def test_malformed_config_writes_nothing(tmp_path, doc):
    config = _write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["pretrain", "--config", str(config), "--out", str(out)]) == 2
    assert not out.exists()


def test_unparsable_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("pretrain: [unclosed\n")
    with pytest.raises(UsageError):
        load_experiment_config(path)


def test_missing_inputs_are_dependency_errors(tmp_path):
    config = _write_config(tmp_path, TINY)
    for command in ("fisher", "adapt", "sweep"):
        assert main([command, "--config", str(config), "--out", str(tmp_path / "empty")]) == 3


def test_unknown_command_fails(tmp_path):
    assert main(["frobnicate"]) != 0


def test_commands_log_to_the_run_directory(run_dir):
    _, root = run_dir
    log = (root / "logs" / "ewcgan.log").read_text()
    assert "Experiment tiny" in log


def test_pretrain_is_reproducible(tmp_path, run_dir):
    config, root = run_dir
    assert main(["pretrain", "--config", str(config), "--out", str(tmp_path / "again")]) == 0
    assert file_digest(tmp_path / "again" / "pretrain" / "source.ckpt") == file_digest(root / "pretrain" / "source.ckpt")


def test_pretrain_outputs(run_dir):
    _, root = run_dir
    layout = RunLayout(root)
    training = pd.read_csv(layout.training_csv)
    assert list(training.columns) == ["iteration", "d_loss", "g_loss", "fd", "coverage", "hq_fraction"]
    assert list(training["iteration"]) == [10, 20]
    assert sorted(p.name for p in layout.checkpoints_dir.iterdir()) == ["iter_000010.ckpt", "iter_000020.ckpt"]
    manifest = read_manifest(layout.pretrain_dir)
    assert manifest.outputs["pretrain/source.ckpt"] == file_digest(layout.source_checkpoint)


def test_resume_reproduces_source(tmp_path, run_dir):
    config, root = run_dir
    out = tmp_path / "resumed"
    checkpoints = out / "pretrain" / "checkpoints"
    checkpoints.mkdir(parents=True)
    (checkpoints / "iter_000010.ckpt").write_bytes((root / "pretrain" / "checkpoints" / "iter_000010.ckpt").read_bytes())
    assert main(["pretrain", "--config", str(config), "--out", str(out), "--resume"]) == 0
    assert file_digest(out / "pretrain" / "source.ckpt") == file_digest(root / "pretrain" / "source.ckpt")


def test_fisher_outputs(run_dir):
    _, root = run_dir
    layers = pd.read_csv(root / "fisher" / "fisher_layers.csv")
    assert list(layers.columns) == ["layer", "kind", "mean", "max", "fraction_of_total"]
    assert list(layers["kind"]) == ["weight", "weight", "bias", "bias"]
    assert (root / "fisher" / "source.fisher").is_file()


def test_sweep_results(run_dir):
    _, root = run_dir
    results = pd.read_csv(root / "sweep" / "results.csv")
    assert list(results.columns) == RESULT_COLUMNS
    assert len(results) == 4
    assert sorted(zip(results["lambda"], results["seed"])) == [(0.0, 0), (0.0, 1), (10.0, 0), (10.0, 1)]
    assert set(results["status"]) == {"ok"}
    summary = pd.read_csv(root / "sweep" / "summary.csv")
    assert len(summary) == 2
    assert list(summary["n_runs"]) == [2, 2]
    reference = pd.read_csv(root / "sweep" / "source_reference.csv")
    assert list(reference["against"]) == ["source", "target_t0"]


def test_cell_artifacts(run_dir):
    _, root = run_dir
    cell = root / "cells" / "lam10_k5_t0_estimated_s0"
    assert {p.name for p in cell.iterdir()} >= {"adapted.ckpt", "drift.csv", "pairs.csv", "row.csv", "manifest.json"}
    drift = pd.read_csv(cell / "drift.csv")
    assert list(drift["iteration"]) == [3, 6]
    manifest = json.loads((cell / "manifest.json").read_text())
    assert manifest["cell"]["lam"] == 10.0
    assert manifest["status"] == "ok"
    assert set(manifest["inputs"]) == {"pretrain/source.ckpt", "fisher/source.fisher"}


def test_rerun_reproduces_cell(run_dir):
    _, root = run_dir
    manifest = root / "cells" / "lam0_k5_t0_estimated_s1" / "manifest.json"
    assert main(["rerun", str(manifest)]) == 0
    rerun = root / "rerun" / "lam0_k5_t0_estimated_s1"
    assert file_digest(rerun / "adapted.ckpt") == file_digest(manifest.parent / "adapted.ckpt")


def test_rerun_detects_mismatch(run_dir):
    _, root = run_dir
    doc = json.loads((root / "cells" / "lam10_k5_t0_estimated_s0" / "manifest.json").read_text())
    doc["outputs"]["row.csv"] = "0" * 64
    tampered = root / "cells" / "tampered" / "manifest.json"
    tampered.parent.mkdir(parents=True, exist_ok=True)
    tampered.write_text(json.dumps(doc))
    try:
        assert main(["rerun", str(tampered)]) == 1
    finally:
        tampered.unlink()
        tampered.parent.rmdir()


def test_failed_cell_does_not_stop_the_sweep(tmp_path, run_dir, monkeypatch):
    config, root = run_dir
    out = tmp_path / "out"
    for stage in ("pretrain", "fisher"):
        shutil.copytree(root / stage, out / stage)
    real_evaluate = pipeline.evaluate_checkpoint

    def evaluate(checkpoint, spec, eval_config, fewshot=None):
        if eval_config.seed == 1:
            raise NumericError("covariance blew up")
        return real_evaluate(checkpoint, spec, eval_config, fewshot)

    monkeypatch.setattr(pipeline, "evaluate_checkpoint", evaluate)
    assert main(["sweep", "--config", str(config), "--out", str(out)]) == 0

    results = pd.read_csv(out / "sweep" / "results.csv")
    assert len(results) == 4
    assert list(results.sort_values(["lambda", "seed"])["status"]) == ["ok", "failed", "ok", "failed"]
    assert results.loc[results["status"] == "failed", "fd"].isna().all()
    summary = pd.read_csv(out / "sweep" / "summary.csv")
    assert list(summary["n_failed"]) == [1, 1]

    failed = out / "cells" / "lam10_k5_t0_estimated_s1"
    manifest = read_manifest(failed)
    assert manifest.status == "failed"
    assert "NumericError" in manifest.error
    assert json.loads((failed / "error.json").read_text())["type"] == "NumericError"
    assert not (failed / "adapted.ckpt").exists()


def test_failed_single_cell_is_an_error(tmp_path, run_dir, monkeypatch):
    config, root = run_dir
    out = tmp_path / "out"
    for stage in ("pretrain", "fisher"):
        shutil.copytree(root / stage, out / stage)

    def evaluate(*args, **kwargs):
        raise NumericError("covariance blew up")

    monkeypatch.setattr(pipeline, "evaluate_checkpoint", evaluate)
    assert main(["adapt", "--config", str(config), "--out", str(out)]) == NumericError.exit_code
    assert read_manifest(out / "cells" / "lam10_k5_t0_estimated_s0").status == "failed"


def test_adapt_command(tmp_path, run_dir):
    config, root = run_dir
    assert main(["adapt", "--config", str(config), "--out", str(root)]) == 0
    assert (root / "cells" / "lam10_k5_t0_estimated_s0" / "adapted.ckpt").is_file()


def test_eval_command(run_dir):
    config, root = run_dir
    assert main(["eval", "--config", str(config), "--out", str(root)]) == 0
    reference = pd.read_csv(root / "eval" / "source_reference.csv")
    assert list(reference["against"]) == ["source", "target_t0"]
    adapted = root / "cells" / "lam0_k5_t0_estimated_s0" / "adapted.ckpt"
    assert main(["eval", "--config", str(config), "--out", str(root), "--checkpoint", str(adapted)]) == 0
    assert (root / "eval" / "adapted.csv").is_file()


def test_correspondence_and_weights(run_dir):
    _, root = run_dir
    corr = pd.read_csv(root / "correspondence" / "correspondence.csv")
    assert sorted(set(corr["lambda"])) == [0.0, 10.0]
    delta = pd.read_csv(root / "weights" / "delta_layers.csv")
    assert list(delta["layer"]) == ["layer_0", "layer_1"]
    assert (delta["delta"] > 0).all()


def test_sample_command(tmp_path):
    out = tmp_path / "data-run"
    assert main(["sample", "--out", str(out), "--n", "50", "--domain", "target"]) == 0
    frame = pd.read_csv(out / "data" / "target.csv")
    assert len(frame) == 50
    assert main(["sample", "--out", str(out), "--domain", "elsewhere"]) == 2


def test_report_is_idempotent(run_dir):
    _, root = run_dir
    assert main(["report", str(root)]) == 0
    report = root / "report"
    first = {p.name: p.read_bytes() for p in report.iterdir()}
    assert {"summary.md", "drift.svg", "fisher_layers.svg", "delta_layers.svg", "sweep_lambda.svg", "correspondence.svg"} <= set(first)
    assert main(["report", str(root)]) == 0
    assert {p.name: p.read_bytes() for p in report.iterdir()} == first
    assert "Last layer has the highest mean Fisher information" in first["summary.md"].decode()


def test_report_of_empty_dir_is_input_error(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 2
    assert main(["report", str(tmp_path / "missing")]) == 2


def test_drift_figure_has_a_line_per_lambda(run_dir):
    _, root = run_dir
    series = drift_series(RunLayout(root))
    assert sorted(series) == [0.0, 10.0]
    fig = drift_figure(series)
    assert [len(ax.get_lines()) for ax in fig.axes] == [len(series)] * 3


def test_fisher_bars_are_per_layer_means(run_dir):
    _, root = run_dir
    layout = RunLayout(root)
    fig = layer_bar_figure(read_csv(layout.fisher_layers_csv), "mean", "mean Fisher information")
    heights = [bar.get_height() for bar in fig.axes[0].patches]
    expected = [row.mean for row in per_layer_mean(load_fisher(layout.fisher_path)) if row.kind == "weight"]
    assert heights == pytest.approx(expected, rel=1e-12)


def test_sweep_cells_order():
    config = ExperimentConfig.model_validate({"sweep": {"lambdas": [0.0, 1.0], "shots": [1, 10], "seeds": [0, 1]}})
    cells = sweep_cells(config)
    assert len(cells) == 8
    assert [c.run_id for c in cells[:3]] == ["lam0_k1_t0_estimated_s0", "lam0_k1_t0_estimated_s1", "lam0_k10_t0_estimated_s0"]


def test_summarize_counts_unfinished_cells():
    rows = []
    for seed, status in enumerate(["ok", "ok", "diverged", "failed"]):
        diverged = status != "ok"
        rows.append({
            "run_id": f"r{seed}", "lambda": 1.0, "shots": 10, "seed": seed,
            "fd": float("nan") if diverged else 1.0 + seed, "diversity": 0.5, "coverage": 1.0, "hq_fraction": 0.9,
            "memorization": 0.1, "transform": 0, "transform_label": "shift(0.5,0.5)", "importance": "estimated",
            "source_target_fd": 0.7, "delta_overall": 0.01, "delta_bias": 0.0, "ewc_penalty": 0.2,
            "paired_distance": 0.3, "status": status,
        })
    summary = summarize(pd.DataFrame(rows, columns=RESULT_COLUMNS))
    assert summary.loc[0, "n_runs"] == 4
    assert summary.loc[0, "n_diverged"] == 1
    assert summary.loc[0, "n_failed"] == 1
    assert summary.loc[0, "fd_mean"] == pytest.approx(1.5)
    assert summary.loc[0, "fd_sem"] == pytest.approx(0.5)


def test_run_id_format():
    assert CellSpec(lam=1e4, shots=10, importance="uniform", seed=2).run_id == "lam10000_k10_t0_uniform_s2"


def test_output_dir_and_workers_precedence(monkeypatch):
    config = ExperimentConfig(output_dir="from-config", workers=3)
    assert resolve_output_dir(config, "flag") == Path("flag")
    assert resolve_output_dir(config) == Path("from-config")
    monkeypatch.setenv("EWCGAN_OUTPUT_DIR", "from-env")
    assert resolve_output_dir(ExperimentConfig()) == Path("from-env")
    assert resolve_workers(config, 2) == 2
    assert resolve_workers(config) == 3
    monkeypatch.setenv("EWCGAN_WORKERS", "5")
    assert resolve_workers(ExperimentConfig()) == 5
    monkeypatch.setenv("EWCGAN_WORKERS", "many")
    with pytest.raises(UsageError):
        resolve_workers(ExperimentConfig())


def test_seed_override_and_digest():
    config = ExperimentConfig().with_seed(7)
    assert config.pretrain.seed == config.adapt.seed == config.fisher.seed == 7
    assert config.sweep.seeds == [7]
    assert ExperimentConfig(output_dir="a").digest() == ExperimentConfig(output_dir="b").digest()
    assert ExperimentConfig().digest() != config.digest()


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    assert load_experiment_config(path).name == path.stem


def test_study_bundle_is_shipped():
    stems = {p.stem for p in CONFIG_DIR.glob("*.yaml")}
    assert stems == {"default", "fig3_drift", "table3_shots", "table4_lambda", "table5_dissimilarity", "fig8_correspondence"}


def test_dissimilarity_config_matches_default_ladder():
    config = load_experiment_config(CONFIG_DIR / "table5_dissimilarity.yaml")
    assert [t.model_dump() for t in config.transforms()] == [t.model_dump() for t in default_target_ladder()]
    assert isinstance(config.transforms()[0], TargetTransform)
