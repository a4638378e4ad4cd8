"""Figure rendering for the report path.

Renders a small set of diagnostic figures next to the CSV report: metric
distributions, the cluster palette swatches, and original-vs-reconstruction
sample pairs. Files are PNGs written with the Agg backend so the CLI works
headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import DatasetReport
from .store import QuantizedDataset, reconstruct

MAX_SAMPLE_PAIRS = 8


def _metric_values(report: DatasetReport, name: str) -> np.ndarray:
    values = np.array([getattr(r, name) for r in report.rows])
    return values[np.isfinite(values)]


def render_metric_histograms(report: DatasetReport, path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, name, label in zip(axes,
                               ("mse_rgb", "psnr_db", "edge_loss"),
                               ("RGB MSE", "PSNR (dB)", "edge loss")):
        values = _metric_values(report, name)
        if values.size:
            ax.hist(values, bins=min(30, max(5, values.size // 2)), color="#4878a8")
        ax.set_xlabel(label)
        ax.set_ylabel("images")
    fig.suptitle(f"{report.method}, {report.q}-bit, "
                 f"{report.distinct_colors} distinct colors")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_palette_swatches(ds: QuantizedDataset, path, max_clusters: int = 32) -> None:
    shown = min(ds.num_clusters, max_clusters)
    swatch = ds.palettes[:shown].astype(np.uint8)  # (C, 2^q, 3)
    fig_h = max(1.5, 0.3 * shown)
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * swatch.shape[1]), fig_h))
    ax.imshow(swatch, aspect="auto", interpolation="nearest")
    ax.set_xlabel("palette entry")
    ax.set_ylabel("cluster")
    ax.set_title(f"{shown} of {ds.num_clusters} cluster palettes, q={ds.q}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_sample_pairs(originals, ds: QuantizedDataset, path) -> None:
    n = min(len(ds.records), MAX_SAMPLE_PAIRS)
    if n == 0:
        return
    fig, axes = plt.subplots(2, n, figsize=(1.6 * n, 3.4), squeeze=False)
    for i in range(n):
        axes[0][i].imshow(np.asarray(originals[i]))
        axes[1][i].imshow(reconstruct(ds.records[i], ds.palettes))
        for row in (0, 1):
            axes[row][i].set_xticks([])
            axes[row][i].set_yticks([])
    axes[0][0].set_ylabel("original")
    axes[1][0].set_ylabel("quantized")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_report_figures(report: DatasetReport, ds: QuantizedDataset,
                          originals, out_dir) -> list[Path]:
    """Render all report figures into `out_dir`; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    targets = [
        (out_dir / "metrics.png", lambda p: render_metric_histograms(report, p)),
        (out_dir / "palettes.png", lambda p: render_palette_swatches(ds, p)),
        (out_dir / "samples.png", lambda p: render_sample_pairs(originals, ds, p)),
    ]
    for path, fn in targets:
        fn(path)
        if path.exists():
            written.append(path)
    return written
