"""Static SVG figures and a markdown summary built from the CSVs of one output directory.

Everything here reads CSVs only, so rebuilding a report never changes its
inputs and produces identical files.
"""
import logging
from pathlib import Path
from typing import Optional

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from ..errors import InputError
from .manifest import read_manifest
from .pipeline import RunLayout, read_csv

logger = logging.getLogger(__name__)

SVG_PARAMS = {"svg.hashsalt": "ewcgan", "svg.fonttype": "path", "path.simplify": False}
TREND_METRICS = [("fd", "Fréchet distance"), ("diversity", "diversity"), ("memorization", "memorization")]


def _save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_PARAMS):
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info("Wrote %s", path)
    return path


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "nan"
    return f"{value:.6g}"


def _markdown_table(frame: pd.DataFrame, columns: list[str]) -> list[str]:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for _, row in frame.iterrows():
        cells = [_fmt(row[c]) if isinstance(row[c], (float, np.floating)) else str(row[c]) for c in columns]
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def drift_series(layout: RunLayout) -> dict[float, pd.DataFrame]:
    """Drift curves averaged over seeds, one frame per lambda present among the cells."""
    frames = []
    for drift_csv in sorted(layout.cells_dir.glob("*/drift.csv")):
        manifest = read_manifest(drift_csv.parent)
        if manifest.status != "ok" or manifest.cell is None:
            continue
        frame = read_csv(drift_csv)
        if frame.empty:
            continue
        frames.append(frame.assign(lam=manifest.cell.lam))
    if not frames:
        return {}
    drift = pd.concat(frames, ignore_index=True)
    return {float(lam): group.groupby("iteration", sort=True).mean(numeric_only=True).reset_index()
            for lam, group in drift.groupby("lam", sort=True)}


def drift_figure(series: dict[float, pd.DataFrame]) -> Figure:
    """Weight change, generator loss and EWC penalty over adaptation iterations, one line per lambda."""
    fig = Figure(figsize=(12, 3.6))
    axes = fig.subplots(1, 3)
    for lam, frame in series.items():
        label = f"λ={lam:g}"
        axes[0].plot(frame["iteration"], frame["delta_overall"], label=label)
        axes[1].plot(frame["iteration"], frame["g_loss"], label=label)
        axes[2].plot(frame["iteration"], frame["ewc_penalty"], label=label)
    for ax, title in zip(axes, ["weight change rate Δ", "generator loss", "EWC penalty"]):
        ax.set_title(title)
        ax.set_xlabel("iteration")
    axes[2].set_yscale("symlog", linthresh=1e-8)
    axes[0].legend(fontsize="small")
    fig.tight_layout()
    return fig


def plot_drift(series: dict[float, pd.DataFrame], path: Path) -> Path:
    return _save(drift_figure(series), path)


def layer_bar_figure(frame: pd.DataFrame, value: str, title: str, kind: Optional[str] = "weight") -> Figure:
    """Bar per layer of one column, plotted exactly as stored."""
    if kind is not None and "kind" in frame:
        frame = frame[frame["kind"] == kind]
    fig = Figure(figsize=(5, 3.6))
    ax = fig.subplots()
    ax.bar(frame["layer"].astype(str), frame[value].to_numpy())
    ax.set_title(title)
    ax.set_xlabel("layer")
    fig.tight_layout()
    return fig


def plot_layer_bars(frame: pd.DataFrame, value: str, title: str, path: Path, kind: Optional[str] = "weight") -> Path:
    return _save(layer_bar_figure(frame, value, title, kind), path)


def _axis_values(summary: pd.DataFrame, axis: str) -> list:
    return sorted(summary[axis].unique())


def plot_sweep_trend(summary: pd.DataFrame, axis: str, path: Path) -> Path:
    """Seed-mean metrics with standard-error bars along one sweep axis, one line per other-axes combination."""
    others = [k for k in ("lambda", "shots", "transform", "importance") if k != axis]
    fig = Figure(figsize=(12, 3.6))
    axes = fig.subplots(1, len(TREND_METRICS))
    for key, group in summary.groupby(others, sort=True):
        group = group.sort_values(axis)
        label = ", ".join(f"{name}={v}" for name, v in zip(others, key))
        x = np.arange(len(group)) if axis == "transform" else group[axis].to_numpy()
        for ax, (metric, title) in zip(axes, TREND_METRICS):
            ax.errorbar(x, group[f"{metric}_mean"], yerr=group[f"{metric}_sem"], marker="o", capsize=3, label=label)
            ax.set_title(title)
    for ax in axes:
        ax.set_xlabel(axis)
        if axis == "lambda":
            ax.set_xscale("symlog", linthresh=1.0)
        if axis == "shots":
            ax.set_xscale("log")
        if axis == "transform":
            ax.set_xticks(np.arange(len(_axis_values(summary, "transform"))))
    axes[0].legend(fontsize="x-small")
    fig.tight_layout()
    return _save(fig, path)


def plot_correspondence(layout: RunLayout, correspondence: pd.DataFrame, path: Path, max_pairs: int = 300) -> Path:
    """Paired source/adapted outputs for the same latent codes, one panel per lambda (lowest seed)."""
    picks = correspondence[correspondence["status"] == "ok"].sort_values(["lambda", "seed"]).groupby("lambda", sort=True).head(1)
    fig = Figure(figsize=(4.2 * max(1, len(picks)), 4.2))
    axes = np.atleast_1d(fig.subplots(1, max(1, len(picks))))
    for ax, (_, pick) in zip(axes, picks.iterrows()):
        pairs = read_csv(layout.cell_dir(pick["run_id"]) / "pairs.csv").head(max_pairs)
        for _, p in pairs.iterrows():
            ax.plot([p["source_x"], p["adapted_x"]], [p["source_y"], p["adapted_y"]], color="0.8", linewidth=0.5)
        ax.scatter(pairs["source_x"], pairs["source_y"], s=4, label="source")
        ax.scatter(pairs["adapted_x"], pairs["adapted_y"], s=4, label="adapted")
        ax.set_title(f"λ={pick['lambda']:g}, mean distance {pick['paired_distance']:.3g}")
        ax.set_aspect("equal")
    axes[0].legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def best_lambdas(summary: pd.DataFrame) -> pd.DataFrame:
    """Lambda with the lowest mean Fréchet distance per (shots, transform, importance); ties go to the smaller lambda."""
    rows = []
    for (shots, transform, label, importance), group in summary.groupby(["shots", "transform", "transform_label", "importance"], sort=True):
        group = group.dropna(subset=["fd_mean"]).sort_values(["fd_mean", "lambda"], kind="mergesort")
        if group.empty:
            continue
        best = group.iloc[0]
        rows.append({"shots": shots, "transform": transform, "transform_label": label, "importance": importance,
                     "lambda_star": best["lambda"], "fd_mean": best["fd_mean"]})
    return pd.DataFrame(rows, columns=["shots", "transform", "transform_label", "importance", "lambda_star", "fd_mean"])


def _last_layer_statement(frame: pd.DataFrame, value: str, what: str, extreme: str) -> str:
    layers = list(frame["layer"])
    values = frame[value].to_numpy()
    pick = int(np.argmax(values) if extreme == "highest" else np.argmin(values))
    holds = pick == len(layers) - 1
    verdict = "holds" if holds else "does not hold"
    return (f"- Last layer has the {extreme} {what}: {verdict} "
            f"({', '.join(f'{l}={_fmt(v)}' for l, v in zip(layers, values))}).")


def build_report(root: Path) -> Path:
    """Render every figure the available CSVs support, then summary.md.

    Raises:
        InputError: If the directory does not exist or holds no results
    """
    layout = RunLayout(Path(root))
    if not layout.root.is_dir():
        raise InputError(f"run directory {layout.root} does not exist")
    sources = {
        "training": layout.training_csv,
        "fisher": layout.fisher_layers_csv,
        "summary": layout.sweep_dir / "summary.csv",
        "reference": layout.sweep_dir / "source_reference.csv",
        "weights": layout.weights_dir / "delta_layers.csv",
        "correspondence": layout.correspondence_dir / "correspondence.csv",
    }
    present = {name: read_csv(path) for name, path in sources.items() if path.is_file()}
    series = drift_series(layout) if layout.cells_dir.is_dir() else {}
    if not present and not series:
        raise InputError(f"run directory {layout.root} holds no results to report")

    out = layout.report_dir
    figures: list[str] = []
    lines = [f"# Report: {layout.root.name}", ""]

    if "training" in present and not present["training"].empty:
        last = present["training"].iloc[-1]
        lines += ["## Pretraining", "",
                  f"Final logged iteration {int(last['iteration'])}: fd {_fmt(last['fd'])}, "
                  f"coverage {_fmt(last['coverage'])}, high-quality fraction {_fmt(last['hq_fraction'])}.", ""]

    if series:
        figures.append(plot_drift(series, out / "drift.svg").name)
        lines += ["## Drift", ""]
        for lam, frame in series.items():
            final = frame.iloc[-1]
            lines.append(f"- λ={lam:g}: final Δ {_fmt(final['delta_overall'])}, final penalty {_fmt(final['ewc_penalty'])}")
        lines.append("")
    else:
        logger.warning("No adaptation cells found; skipping drift curves")

    lines += ["## Layer observations", ""]
    if "fisher" in present:
        fisher = present["fisher"]
        weights = fisher[fisher["kind"] == "weight"]
        figures.append(plot_layer_bars(fisher, "mean", "mean Fisher information (weights)", out / "fisher_layers.svg").name)
        lines += _markdown_table(fisher, ["layer", "kind", "mean", "max", "fraction_of_total"]) + [""]
        lines.append(_last_layer_statement(weights, "mean", "mean Fisher information", "highest"))
    else:
        logger.warning("No fisher_layers.csv; skipping Fisher bars")
    if "weights" in present:
        delta = present["weights"]
        figures.append(plot_layer_bars(delta, "delta", "weight change rate per layer", out / "delta_layers.svg", kind=None).name)
        lines.append(_last_layer_statement(delta, "delta", "weight change rate", "lowest"))
    else:
        logger.warning("No delta_layers.csv; run analyze-weights for per-layer change")
    lines.append("")

    if "summary" in present:
        summary = present["summary"]
        lines += ["## Sweep (mean ± standard error over seeds)", ""]
        table = summary.assign(**{
            metric: [f"{_fmt(m)} ± {_fmt(s)}" for m, s in zip(summary[f"{metric}_mean"], summary[f"{metric}_sem"])]
            for metric in ("fd", "diversity", "memorization", "delta_overall")
        })
        lines += _markdown_table(table, ["lambda", "shots", "transform_label", "importance", "n_runs", "n_diverged", "n_failed",
                                         "fd", "diversity", "memorization", "delta_overall"]) + [""]
        for axis in ("lambda", "shots", "transform"):
            if len(_axis_values(summary, axis)) > 1:
                figures.append(plot_sweep_trend(summary, axis, out / f"sweep_{axis}.svg").name)
        best = best_lambdas(summary)
        if not best.empty:
            lines += ["### Best λ by Fréchet distance", ""]
            lines += _markdown_table(best, ["shots", "transform_label", "importance", "lambda_star", "fd_mean"]) + [""]
    if "reference" in present:
        lines += ["## Unadapted source generator", ""]
        lines += _markdown_table(present["reference"], list(present["reference"].columns)) + [""]

    if "correspondence" in present:
        corr = present["correspondence"]
        figures.append(plot_correspondence(layout, corr, out / "correspondence.svg").name)
        means = corr[corr["status"] == "ok"].groupby("lambda", sort=True)["paired_distance"].mean()
        lines += ["## Correspondence", ""]
        lines += [f"- λ={lam:g}: mean paired distance {_fmt(d)}" for lam, d in means.items()] + [""]

    lines += ["## Figures", ""] + [f"- [{name}]({name})" for name in figures] + [""]
    path = out / "summary.md"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines))
    logger.info("Report written to %s", path)
    return path
