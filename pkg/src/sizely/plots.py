"""Figure rendering for simulation reports (PNG files next to the CSV/JSON
outputs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLE = {
    "figure.figsize": (7.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.axisbelow": True,
}


def save_report_figure(report, path: str | Path) -> Path:
    """Per-task-type wastage breakdown for a single method run."""
    path = Path(path)
    types = sorted(report.per_type)
    values = [report.per_type[t].wasted_gbh for t in types]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.bar(types, values, color="tab:blue")
        ax.set_ylabel("wastage [GBh]")
        ax.set_title(f"memory wastage by task type ({report.method})")
        ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return path


def save_comparison_figures(reports: dict, out_dir: str | Path) -> list[Path]:
    """Method-by-method bars for total wastage, failures, and runtime."""
    out_dir = Path(out_dir)
    methods = list(reports)
    panels = [
        ("compare_wastage.png", "wastage [GBh]", [reports[m].total.wasted_gbh for m in methods]),
        ("compare_failures.png", "failed attempts", [reports[m].total.failures for m in methods]),
        ("compare_runtime.png", "aggregated runtime [h]", [reports[m].total.runtime_hours for m in methods]),
    ]
    paths = []
    with plt.rc_context(_STYLE):
        for fname, ylabel, values in panels:
            fig, ax = plt.subplots()
            ax.bar(methods, values, color="tab:green")
            ax.set_ylabel(ylabel)
            ax.tick_params(axis="x", rotation=30)
            fig.tight_layout()
            target = out_dir / fname
            fig.savefig(target, dpi=150)
            plt.close(fig)
            paths.append(target)
    return paths
