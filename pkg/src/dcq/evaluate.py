"""Fidelity and storage metrics for quantized datasets.

Reports carry per-image MSE/PSNR over 8-bit RGB plus the LAB edge loss,
with mean/median aggregates and the storage accounting (distinct palette
colors, compression ratio). CSV emission is deterministic: fixed column
order, 9 significant digits, `inf`/`nan` spelled literally, aggregate
lines as `#` comments after the rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .color import srgb_to_lab
from .refine import DEFAULT_WEIGHTS, check_weights, edge_loss
from .store import QuantizedDataset, compression_ratio, distinct_color_count, reconstruct

CSV_HEADER = ["image_id", "method", "q", "mse_rgb", "psnr_db", "edge_loss"]
METRIC_NAMES = ("mse_rgb", "psnr_db", "edge_loss")


@dataclass
class ImageMetrics:
    mse_rgb: float
    psnr_db: float               # math.inf when mse_rgb == 0
    edge_loss: float


@dataclass
class DatasetReport:
    method: str
    q: int
    rows: list[ImageMetrics]
    mean: dict = field(default_factory=dict)
    median: dict = field(default_factory=dict)
    distinct_colors: int = 0
    compression: float = 0.0
    seconds: float = 0.0         # wall clock; never serialized to CSV


def _aggregate(rows: list[ImageMetrics]) -> tuple[dict, dict]:
    mean, median = {}, {}
    for name in METRIC_NAMES:
        values = np.array([getattr(r, name) for r in rows], dtype=np.float64)
        if values.size == 0:
            mean[name] = math.nan
            median[name] = math.nan
        else:
            mean[name] = float(values.mean())
            median[name] = float(np.median(values))
    return mean, median


def psnr(mse: float) -> float:
    if mse <= 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def image_metrics(orig: np.ndarray, recon: np.ndarray,
                  weights=DEFAULT_WEIGHTS) -> ImageMetrics:
    """MSE/PSNR over the 3*H*W 8-bit channel values, edge loss in LAB."""
    check_weights(weights)
    orig = np.asarray(orig)
    recon = np.asarray(recon)
    if orig.shape != recon.shape:
        raise ValueError(f"shape mismatch: {orig.shape} vs {recon.shape}")
    diff = orig.astype(np.float64) - recon.astype(np.float64)
    mse = float((diff * diff).mean())
    el = edge_loss(srgb_to_lab(orig), srgb_to_lab(recon), weights)
    return ImageMetrics(mse_rgb=mse, psnr_db=psnr(mse), edge_loss=el)


def evaluate_dataset(originals, ds: QuantizedDataset, weights=DEFAULT_WEIGHTS,
                     method: str = "dcq", seconds: float = 0.0) -> DatasetReport:
    """Reconstruct every record and compute per-image and aggregate metrics."""
    if len(originals) != len(ds.records):
        raise ValueError(
            f"{len(originals)} original images for {len(ds.records)} records")
    rows = []
    for orig, rec in zip(originals, ds.records):
        rows.append(image_metrics(orig, reconstruct(rec, ds.palettes), weights))
    mean, median = _aggregate(rows)
    return DatasetReport(
        method=method, q=ds.q, rows=rows, mean=mean, median=median,
        distinct_colors=distinct_color_count(ds),
        compression=float(compression_ratio(ds.q)),
        seconds=seconds)


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def write_report_csv(report: DatasetReport, path) -> None:
    """Write rows plus `# aggregate` comment lines; byte-deterministic."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, row in enumerate(report.rows):
            writer.writerow([i, report.method, report.q, _fmt(row.mse_rgb),
                             _fmt(row.psnr_db), _fmt(row.edge_loss)])
        for name, agg in (("mean", report.mean), ("median", report.median)):
            fh.write(f"# aggregate,{name},{_fmt(agg['mse_rgb'])},"
                     f"{_fmt(agg['psnr_db'])},{_fmt(agg['edge_loss'])}\n")
        fh.write(f"# distinct_colors,{report.distinct_colors}\n")
        fh.write(f"# compression_ratio,{_fmt(report.compression)}\n")


def read_report_csv(path) -> tuple[list[ImageMetrics], dict]:
    """Parse a report CSV back into rows and aggregate/storage values."""
    rows = []
    extras: dict = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.reader(fh):
            if not record:
                continue
            if record[0].startswith("#"):
                kind = record[0].lstrip("# ").strip()
                if kind == "aggregate":
                    extras[record[1]] = {name: float(v) for name, v in
                                         zip(METRIC_NAMES, record[2:5])}
                else:
                    extras[kind] = record[1]
                continue
            if record[0] == "image_id":
                continue
            rows.append(ImageMetrics(mse_rgb=float(record[3]),
                                     psnr_db=float(record[4]),
                                     edge_loss=float(record[5])))
    return rows, extras
