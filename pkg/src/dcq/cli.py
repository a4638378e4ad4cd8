"""Command-line interface.

Subcommands mirror the pipeline stages (`quantize` runs them all):

    dcq quantize    --input data.dcqi --out outdir --bits 1 --clusters 20 ...
    dcq cluster     --input data.dcqi --features histogram --out clusters.json
    dcq palettes    --input data.dcqi --clusters-file c.json --out palettes.json
    dcq refine      --input data.dcqi --clusters-file c.json --palettes-file p.json
    dcq pack        --input data.dcqi --clusters-file c.json --palettes-file p.json
    dcq reconstruct --input data.dcqd --image 0 --out img.png
    dcq eval        --input data.dcqi --dataset data.dcqd --out report.csv
    dcq baseline    --input data.dcqi --method mediancut --bits 2 --out data.dcqd
    dcq info        --input data.dcqd

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .clustering import FormatError, cluster_dataset
from .evaluate import evaluate_dataset, write_report_csv
from .palette import build_all_palettes
from .pipeline import (
    PipelineConfig,
    StageError,
    assemble_dataset,
    baseline_dataset,
    cluster_model_from_json,
    cluster_model_to_json,
    compute_features,
    load_attention_for,
    load_json,
    palettes_from_json,
    palettes_to_json,
    refine_cluster_palettes,
    run_quantize,
    save_json,
)
from .store import (
    distinct_color_count,
    encoded_size,
    load_dataset,
    load_images,
    read_labels,
    reconstruct,
    write_dataset,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def load_input_images(path) -> np.ndarray:
    """DCQI container or a directory of PNG files (sorted by name)."""
    path = Path(path)
    if path.is_dir():
        from PIL import Image
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".bmp"))
        if not files:
            raise FormatError(f"{path}: no PNG images found")
        images = [np.asarray(Image.open(p).convert("RGB")) for p in files]
        shapes = {im.shape for im in images}
        if len(shapes) != 1:
            raise FormatError(f"{path}: images have mixed shapes {sorted(shapes)}")
        return np.stack(images)
    return load_images(path)


def _load_labels(args, n_images: int):
    if not getattr(args, "labels", None):
        return None
    labels = read_labels(args.labels)
    if len(labels) != n_images:
        raise FormatError(
            f"{args.labels}: {len(labels)} labels for {n_images} images")
    return labels


def _weights(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 'l,a,b', got {text!r}")
    return tuple(float(p) for p in parts)


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {text!r}")
    return text == "on"


def _config_from_args(args) -> PipelineConfig:
    return PipelineConfig(
        q=args.bits, clusters=args.clusters, k_gra=args.kgra, seed=args.seed,
        features=args.features, attention=args.attention,
        refine=args.refine, refine_steps=args.refine_steps,
        refine_lr=args.refine_lr, refine_sample=args.refine_sample,
        weights=args.weights, method=args.method, threads=args.threads,
        pixel_cap=args.pixel_cap,
        random_clusters=getattr(args, "random_clusters", False))


def _cleanup(paths):
    for p in paths:
        try:
            Path(p).unlink()
        except OSError:
            pass


def cmd_quantize(args) -> int:
    images = load_input_images(args.input)
    labels = _load_labels(args, len(images))
    cfg = _config_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds_path = out_dir / "dataset.dcqd"
    csv_path = out_dir / "report.csv"
    written = []
    try:
        ds, report = run_quantize(images, cfg, labels)
        write_dataset(ds, ds_path)
        written.append(ds_path)
        write_report_csv(report, csv_path)
        written.append(csv_path)
        if args.figures:
            from .figures import render_report_figures
            written += render_report_figures(report, ds, images, out_dir)
    except Exception:
        _cleanup(written)
        raise
    print(f"wrote {ds_path} ({ds_path.stat().st_size} bytes), {csv_path}")
    print(f"method={report.method} q={report.q} distinct_colors={report.distinct_colors} "
          f"mean_mse={report.mean['mse_rgb']:.6g} mean_edge_loss={report.mean['edge_loss']:.6g}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    images = load_input_images(args.input)
    features = compute_features(images, args.features)
    model = cluster_dataset(features, k=args.clusters, seed=args.seed)
    save_json(cluster_model_to_json(model), args.out)
    print(f"wrote {args.out}: k={model.k} inertia={model.inertia:.6g}")
    return EXIT_OK


def cmd_palettes(args) -> int:
    images = load_input_images(args.input)
    model = cluster_model_from_json(load_json(args.clusters_file))
    attention = load_attention_for(images, args.attention)
    from .color import srgb_to_lab
    lab_images = [srgb_to_lab(im) for im in images]
    palettes = build_all_palettes(lab_images, model, attention_maps=attention,
                                  q=args.bits, k_gra=args.kgra, seed=args.seed,
                                  cap=args.pixel_cap)
    save_json(palettes_to_json(palettes), args.out)
    print(f"wrote {args.out}: {palettes.num_clusters} palettes of {1 << args.bits} colors")
    return EXIT_OK


def cmd_refine(args) -> int:
    images = load_input_images(args.input)
    model = cluster_model_from_json(load_json(args.clusters_file))
    palettes = palettes_from_json(load_json(args.palettes_file))
    cfg = _config_from_args(args)
    from .color import srgb_to_lab
    lab_images = [srgb_to_lab(im) for im in images]
    refined = refine_cluster_palettes(lab_images, model, palettes, cfg)
    save_json(palettes_to_json(refined, refined=True), args.out)
    print(f"wrote {args.out}: refined {refined.num_clusters} palettes")
    return EXIT_OK


def cmd_pack(args) -> int:
    images = load_input_images(args.input)
    labels = _load_labels(args, len(images))
    model = cluster_model_from_json(load_json(args.clusters_file))
    palettes = palettes_from_json(load_json(args.palettes_file))
    from .color import srgb_to_lab
    lab_images = [srgb_to_lab(im) for im in images]
    ds = assemble_dataset(lab_images, model.assignments, palettes,
                          labels=labels, threads=args.threads)
    write_dataset(ds, args.out)
    print(f"wrote {args.out} ({Path(args.out).stat().st_size} bytes)")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    ds = load_dataset(args.input)
    from PIL import Image
    if args.image is not None:
        if not 0 <= args.image < len(ds.records):
            raise FormatError(
                f"image index {args.image} out of range [0, {len(ds.records)})")
        img = reconstruct(ds.records[args.image], ds.palettes)
        Image.fromarray(img).save(args.out)
        print(f"wrote {args.out}")
        return EXIT_OK
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(ds.records):
        Image.fromarray(reconstruct(rec, ds.palettes)).save(
            out_dir / f"{i:06d}.png")
    print(f"wrote {len(ds.records)} images to {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    images = load_input_images(args.input)
    ds = load_dataset(args.dataset)
    report = evaluate_dataset(images, ds, weights=args.weights, method=args.method)
    write_report_csv(report, args.out)
    if args.figures:
        from .figures import render_report_figures
        render_report_figures(report, ds, images, Path(args.out).parent)
    print(f"wrote {args.out}: mean_mse={report.mean['mse_rgb']:.6g} "
          f"mean_psnr={report.mean['psnr_db']:.6g}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    images = load_input_images(args.input)
    labels = _load_labels(args, len(images))
    ds = baseline_dataset(images, args.method, args.bits, seed=args.seed,
                          labels=labels, threads=args.threads)
    write_dataset(ds, args.out)
    print(f"wrote {args.out} ({Path(args.out).stat().st_size} bytes)")
    return EXIT_OK


def cmd_info(args) -> int:
    path = Path(args.input)
    ds = load_dataset(path)
    size = path.stat().st_size
    formula = encoded_size(ds.q, ds.num_clusters, len(ds.records),
                           ds.height, ds.width)
    print(f"q: {ds.q}")
    print(f"dimensions: {ds.height}x{ds.width}")
    print(f"images: {len(ds.records)}")
    print(f"clusters: {ds.num_clusters}")
    print(f"distinct_colors: {distinct_color_count(ds)}")
    print(f"bytes: {size} (formula: {formula})")
    return EXIT_OK


def _add_common(p, refine_flags=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--bits", type=int, default=1, metavar="Q")
    p.add_argument("--weights", type=_weights, default=(1.0, 1.0, 1.0),
                   metavar="L,A,B")
    if refine_flags:
        p.add_argument("--refine", type=_on_off, default=True, metavar="on|off")
        p.add_argument("--refine-steps", type=int, default=100)
        p.add_argument("--refine-lr", type=float, default=0.05)
        p.add_argument("--refine-sample", type=int, default=64)


def build_parser() -> _Parser:
    parser = _Parser(prog="dcq", description="Dataset color quantization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="run the full pipeline")
    q.add_argument("--input", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--labels")
    q.add_argument("--clusters", type=int, default=20, metavar="K")
    q.add_argument("--kgra", type=float, default=0.5, metavar="F")
    q.add_argument("--features", default="histogram", metavar="PATH|histogram")
    q.add_argument("--attention", default="none", metavar="PATH|none")
    q.add_argument("--method", default="dcq",
                   choices=("dcq", "kmeans", "mediancut", "octree"))
    q.add_argument("--pixel-cap", type=int, default=100_000)
    q.add_argument("--figures", type=_on_off, default=True, metavar="on|off")
    q.add_argument("--random-clusters", action="store_true",
                   help="debug: uniform random first-level clustering")
    _add_common(q)
    q.set_defaults(fn=cmd_quantize)

    c = sub.add_parser("cluster", help="first-level image clustering")
    c.add_argument("--input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--features", default="histogram", metavar="PATH|histogram")
    c.add_argument("--clusters", type=int, default=20, metavar="K")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_cluster)

    pl = sub.add_parser("palettes", help="learn shared cluster palettes")
    pl.add_argument("--input", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--clusters-file", required=True)
    pl.add_argument("--attention", default="none", metavar="PATH|none")
    pl.add_argument("--kgra", type=float, default=0.5, metavar="F")
    pl.add_argument("--pixel-cap", type=int, default=100_000)
    pl.add_argument("--bits", type=int, default=1, metavar="Q")
    pl.add_argument("--seed", type=int, default=0)
    pl.set_defaults(fn=cmd_palettes)

    r = sub.add_parser("refine", help="texture-preserving palette refinement")
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--clusters-file", required=True)
    r.add_argument("--palettes-file", required=True)
    r.add_argument("--features", default="histogram")
    r.add_argument("--attention", default="none")
    r.add_argument("--clusters", type=int, default=20)
    r.add_argument("--kgra", type=float, default=0.5)
    r.add_argument("--method", default="dcq")
    r.add_argument("--pixel-cap", type=int, default=100_000)
    _add_common(r)
    r.set_defaults(fn=cmd_refine)

    pk = sub.add_parser("pack", help="quantize and pack to a DCQD container")
    pk.add_argument("--input", required=True)
    pk.add_argument("--out", required=True)
    pk.add_argument("--clusters-file", required=True)
    pk.add_argument("--palettes-file", required=True)
    pk.add_argument("--labels")
    pk.add_argument("--threads", type=int, default=1)
    pk.set_defaults(fn=cmd_pack)

    rc = sub.add_parser("reconstruct", help="rebuild images from a container")
    rc.add_argument("--input", required=True)
    rc.add_argument("--out", required=True)
    rc.add_argument("--image", type=int, default=None,
                    help="single image index; otherwise all into a directory")
    rc.set_defaults(fn=cmd_reconstruct)

    ev = sub.add_parser("eval", help="fidelity report for a quantized container")
    ev.add_argument("--input", required=True, help="original images (DCQI or dir)")
    ev.add_argument("--dataset", required=True, help="DCQD container")
    ev.add_argument("--out", required=True)
    ev.add_argument("--method", default="dcq")
    ev.add_argument("--weights", type=_weights, default=(1.0, 1.0, 1.0))
    ev.add_argument("--figures", type=_on_off, default=True, metavar="on|off")
    ev.set_defaults(fn=cmd_eval)

    b = sub.add_parser("baseline", help="per-image baseline quantizers")
    b.add_argument("--input", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--labels")
    b.add_argument("--method", required=True,
                   choices=("kmeans", "mediancut", "octree"))
    b.add_argument("--bits", type=int, default=1, metavar="Q")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--threads", type=int, default=1)
    b.set_defaults(fn=cmd_baseline)

    info = sub.add_parser("info", help="summarize a DCQD container")
    info.add_argument("--input", required=True)
    info.set_defaults(fn=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StageError as err:
        print(f"dcq: {err}", file=sys.stderr)
        if isinstance(err.cause, (FormatError, ValueError, OSError)):
            return EXIT_DATA
        return EXIT_INTERNAL
    except (FormatError, ValueError, OSError) as err:
        print(f"dcq: error: {err}", file=sys.stderr)
        return EXIT_DATA
    except Exception as err:  # invariant violations, bugs
        print(f"dcq: internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
