"""Report emission: metrics CSV, JSON summary, and line plots for learning
curves and sweeps.

CSV output uses repr-formatted floats so re-emitting from the same summary
is byte-identical; plots are best-effort presentation artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import MetricsRecord, SweepResult  # noqa: E402

METRICS_COLUMNS = [
    "label", "mean_bandwidth_pct", "min_bandwidth_pct", "max_bandwidth_pct",
    "mean_qos_degradation_pct", "min_qos_degradation_pct",
    "max_qos_degradation_pct", "episodes", "config_hash",
]


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_metrics_csv(records: list, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for rec in records:
            row = rec.as_dict() if isinstance(rec, MetricsRecord) else rec
            writer.writerow([_fmt(row[c]) for c in METRICS_COLUMNS])


CURVE_COLUMN_ORDER = [
    "epoch", "mean_bandwidth_pct", "min_bandwidth_pct", "max_bandwidth_pct",
    "mean_beta_pct", "min_beta_pct", "max_beta_pct",
]


def write_curves_csv(curves: list, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not curves:
        path.write_text("epoch\n")
        return
    # fixed column order so re-emission from a JSON summary is byte-identical
    known = [c for c in CURVE_COLUMN_ORDER if c in curves[0]]
    columns = known + sorted(set(curves[0]) - set(known))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in curves:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def write_summary_json(summary: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def load_summary_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def plot_learning_curves(curves: list, out_dir: str | Path, tag: str = "train") -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if not curves:
        return written
    epochs = [row["epoch"] for row in curves]
    for quantity, title in (("bandwidth_pct", "Mean bandwidth allocation (%)"),
                            ("beta_pct", "Mean QoS degradation (%)")):
        fig, ax = plt.subplots(figsize=(6, 4))
        mean_key = f"mean_{quantity}"
        ax.plot(epochs, [row[mean_key] for row in curves], lw=1.2, label="mean")
        lo_key, hi_key = f"min_{quantity}", f"max_{quantity}"
        if lo_key in curves[0]:
            ax.fill_between(epochs, [row[lo_key] for row in curves],
                            [row[hi_key] for row in curves], alpha=0.25,
                            label="min/max")
        if quantity == "beta_pct":
            ax.axhline(10.0, color="red", ls="--", lw=0.8, label="threshold")
        ax.set_xlabel("epoch")
        ax.set_ylabel(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        out = out_dir / f"{tag}_{quantity}.png"
        fig.savefig(out, dpi=120)
        plt.close(fig)
        written.append(out)
    return written


def plot_sweep(sweep: SweepResult, out_dir: str | Path, beta_thresh_pct: float = 10.0) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = sweep.values
    ax.plot(xs, [r.mean_bandwidth_pct for r in sweep.records], "o-", lw=1.2,
            label="bandwidth %")
    ax.plot(xs, [r.mean_qos_degradation_pct for r in sweep.records], "s-", lw=1.2,
            label="QoS degradation %")
    if sweep.reference is not None:
        ax.axhline(sweep.reference.mean_bandwidth_pct, color="C0", ls=":",
                   lw=0.9, label=f"{sweep.reference.label} bandwidth")
        ax.axhline(sweep.reference.mean_qos_degradation_pct, color="C1", ls=":",
                   lw=0.9, label=f"{sweep.reference.label} degradation")
    ax.axhline(beta_thresh_pct, color="red", ls="--", lw=0.8)
    ax.set_xlabel(sweep.parameter)
    ax.set_ylabel("percent")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out = out_dir / f"sweep_{sweep.parameter}.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def emit_report(summary: dict, out_dir: str | Path) -> dict:
    """Write metrics.csv, summary.json, and curves/*.png from a results
    summary; returns the paths written.

    The summary layout is what the CLI composes: optional "records"
    (metrics table), "curves" (per-epoch rows), and "sweeps" (serialized
    SweepResults).  Re-emitting from the same summary reproduces the CSV
    outputs byte-for-byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out_dir / "summary.json"}
    write_summary_json(summary, paths["summary"])

    records = [MetricsRecord.from_dict(r) for r in summary.get("records", [])]
    paths["metrics"] = out_dir / "metrics.csv"
    write_metrics_csv(records, paths["metrics"])

    if summary.get("curves"):
        paths["curves_csv"] = out_dir / "curves.csv"
        write_curves_csv(summary["curves"], paths["curves_csv"])
        paths["curve_plots"] = plot_learning_curves(summary["curves"],
                                                    out_dir / "curves")
    for sweep_dict in summary.get("sweeps", []):
        sweep = SweepResult.from_dict(sweep_dict)
        paths[f"sweep_{sweep.parameter}"] = plot_sweep(sweep, out_dir / "curves")
    return paths
