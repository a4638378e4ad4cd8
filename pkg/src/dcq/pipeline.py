"""End-to-end orchestration: ingest, cluster, learn palettes, refine, pack.

Every stage is a plain function over in-memory arrays plus a JSON/binary
artifact representation, so the CLI can run the whole pipeline in one
process or stage by stage with bit-identical results. All randomness is
derived from the config seed; per-cluster work uses seed + cluster_index.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import BASELINE_METHODS, median_cut, octree_quantize, per_image_kmeans
from .clustering import (
    ClusterModel,
    cluster_dataset,
    color_histogram_features,
    load_features,
    random_clusters,
)
from .color import lab_to_srgb, srgb_to_lab
from .evaluate import DatasetReport, evaluate_dataset
from .palette import (
    DEFAULT_KGRA,
    DEFAULT_PIXEL_CAP,
    ClusterPalettes,
    build_all_palettes,
    load_attention,
)
from .refine import RefineConfig, quantize_hard, refine_palette, sample_cluster_members
from .store import QuantizedDataset, QuantizedRecord


@dataclass
class PipelineConfig:
    q: int = 1
    clusters: int = 20
    k_gra: float = DEFAULT_KGRA
    seed: int = 0
    features: str = "histogram"      # "histogram" or a DCQF path
    attention: str = "none"          # "none" or a DCQA path
    refine: bool = True
    refine_steps: int = 100
    refine_lr: float = 0.05
    refine_sample: int = 64
    weights: tuple = (1.0, 1.0, 1.0)
    method: str = "dcq"              # "dcq" or one of BASELINE_METHODS
    threads: int = 1
    pixel_cap: int = DEFAULT_PIXEL_CAP
    random_clusters: bool = False    # debug: skip features, assign uniformly


class StageError(RuntimeError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _run_stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def compute_features(images: np.ndarray, source: str) -> np.ndarray:
    """Histogram features or externally exported DCQF vectors."""
    if source == "histogram":
        return np.array([color_histogram_features(im) for im in images])
    feats = load_features(source)
    if feats.shape[0] != len(images):
        raise ValueError(
            f"feature file has {feats.shape[0]} rows for {len(images)} images")
    return feats


def load_attention_for(images: np.ndarray, source: str):
    if source == "none":
        return None
    maps = load_attention(source)
    if maps.shape[0] != len(images):
        raise ValueError(
            f"attention file has {maps.shape[0]} maps for {len(images)} images")
    if maps.shape[1:] != images.shape[1:3]:
        raise ValueError(
            f"attention maps are {maps.shape[1:]}, images are {images.shape[1:3]}")
    return maps


def refine_cluster_palettes(lab_images, model: ClusterModel,
                            palettes: ClusterPalettes,
                            cfg: PipelineConfig) -> ClusterPalettes:
    """Refine each cluster's palette on a seeded subsample of its members."""
    base = RefineConfig(steps=cfg.refine_steps, lr=cfg.refine_lr,
                        weights=cfg.weights, sample_images=cfg.refine_sample,
                        seed=cfg.seed)

    def one(c: int) -> np.ndarray:
        members = np.flatnonzero(model.assignments == c)
        chosen = sample_cluster_members(members, base.sample_images, seed=cfg.seed + c)
        images = [lab_images[i] for i in chosen]
        refined, _ = refine_palette(images, palettes.colors[c], base)
        return refined

    colors = np.stack(_map(one, range(model.k), cfg.threads))
    return ClusterPalettes(q=palettes.q, colors=colors, padded=palettes.padded.copy())


def assemble_dataset(lab_images, assignments, palettes: ClusterPalettes,
                     labels=None, threads: int = 1) -> QuantizedDataset:
    """Hard-quantize every image against its cluster palette and pack records."""
    srgb_palettes = lab_to_srgb(palettes.colors)

    def one(i: int) -> QuantizedRecord:
        _, indices = quantize_hard(lab_images[i], palettes.colors[assignments[i]])
        return QuantizedRecord(
            cluster_id=int(assignments[i]),
            label=None if labels is None else int(labels[i]),
            indices=indices.astype(np.uint8))

    records = _map(one, range(len(lab_images)), threads)
    h, w = lab_images[0].shape[:2]
    return QuantizedDataset(q=palettes.q, height=h, width=w,
                            palettes=srgb_palettes, records=records)


def baseline_dataset(images: np.ndarray, method: str, q: int, seed: int = 0,
                     labels=None, threads: int = 1) -> QuantizedDataset:
    """Per-image quantization; every image becomes its own cluster."""
    images = np.asarray(images)
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline method {method!r}")

    def one(i: int):
        image = images[i]
        if method == "kmeans":
            return per_image_kmeans(image, q, seed=seed + i)
        if method == "mediancut":
            return median_cut(image, q)
        return octree_quantize(image, q)

    results = _map(one, range(len(images)), threads)
    palettes = lab_to_srgb(np.stack([pal for pal, _ in results]))
    records = [QuantizedRecord(cluster_id=i,
                               label=None if labels is None else int(labels[i]),
                               indices=idx.astype(np.uint8))
               for i, (_, idx) in enumerate(results)]
    h, w = images[0].shape[:2]
    return QuantizedDataset(q=q, height=h, width=w, palettes=palettes, records=records)


def run_quantize(images: np.ndarray, cfg: PipelineConfig,
                 labels=None) -> tuple[QuantizedDataset, DatasetReport]:
    """The full pipeline: features, clustering, palettes, refinement, packing.

    Deterministic for a fixed (images, labels, cfg); `cfg.threads` only
    changes scheduling, never results.
    """
    started = time.monotonic()
    images = np.asarray(images)
    if cfg.method in BASELINE_METHODS:
        ds = _run_stage("baseline", baseline_dataset, images, cfg.method, cfg.q,
                        seed=cfg.seed, labels=labels, threads=cfg.threads)
    else:
        if cfg.method != "dcq":
            raise StageError("config", ValueError(f"unknown method {cfg.method!r}"))
        if cfg.random_clusters:
            model = _run_stage("cluster", random_clusters, len(images),
                               cfg.clusters, seed=cfg.seed)
        else:
            features = _run_stage("features", compute_features, images, cfg.features)
            model = _run_stage("cluster", cluster_dataset, features, k=cfg.clusters,
                               seed=cfg.seed)
        attention = _run_stage("attention", load_attention_for, images, cfg.attention)
        lab_images = [srgb_to_lab(im) for im in images]
        palettes = _run_stage("palettes", build_all_palettes, lab_images, model,
                              attention_maps=attention, q=cfg.q, k_gra=cfg.k_gra,
                              seed=cfg.seed, cap=cfg.pixel_cap)
        if cfg.refine and cfg.refine_steps > 0:
            palettes = _run_stage("refine", refine_cluster_palettes, lab_images,
                                  model, palettes, cfg)
        ds = _run_stage("pack", assemble_dataset, lab_images, model.assignments,
                        palettes, labels=labels, threads=cfg.threads)
    report = _run_stage("eval", evaluate_dataset, images, ds, weights=cfg.weights,
                        method=cfg.method, seconds=time.monotonic() - started)
    return ds, report


# --- JSON artifacts for staged execution -----------------------------------

def cluster_model_to_json(model: ClusterModel) -> dict:
    return {
        "k": model.k,
        "seed": model.seed,
        "inertia": model.inertia,
        "centroids": model.centroids.tolist(),
        "assignments": model.assignments.tolist(),
    }


def cluster_model_from_json(doc: dict) -> ClusterModel:
    return ClusterModel(
        k=int(doc["k"]),
        centroids=np.array(doc["centroids"], dtype=np.float64),
        assignments=np.array(doc["assignments"], dtype=np.int64),
        inertia=float(doc["inertia"]),
        seed=int(doc["seed"]))


def palettes_to_json(palettes: ClusterPalettes, refined: bool = False) -> dict:
    return {
        "q": palettes.q,
        "refined": refined,
        "colors": palettes.colors.tolist(),
        "padded": palettes.padded.tolist(),
    }


def palettes_from_json(doc: dict) -> ClusterPalettes:
    return ClusterPalettes(
        q=int(doc["q"]),
        colors=np.array(doc["colors"], dtype=np.float64),
        padded=np.array(doc["padded"], dtype=bool))


def save_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
