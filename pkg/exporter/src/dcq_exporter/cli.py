"""CLI: export CNN features and attention maps for the quantization toolkit.

    dcq-export export --model resnet18 --images data.dcqi \
        --features out.dcqf --attention out.dcqa --method gradcam++
"""

from __future__ import annotations

import argparse
import sys

from .cam import CAM_METHODS
from .export import ExportManifest, export_attention, export_features
from .formats import FormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcq-export")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("export", help="write DCQF features and/or DCQA attention")
    ex.add_argument("--model", required=True,
                    help="torchvision model name or saved model path")
    ex.add_argument("--images", required=True, help="DCQI container or PNG directory")
    ex.add_argument("--features", help="output DCQF path")
    ex.add_argument("--attention", help="output DCQA path")
    ex.add_argument("--method", default="gradcam++", choices=CAM_METHODS)
    ex.add_argument("--weights", help="state-dict file for a named model")
    ex.add_argument("--layer", default="auto", help="feature layer (dotted name)")
    ex.add_argument("--cam-layer", default="auto", help="attention target layer")
    ex.add_argument("--batch", type=int, default=16)
    ex.add_argument("--device", default="cpu")
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--no-normalize", action="store_true",
                    help="skip ImageNet mean/std normalization")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.features and not args.attention:
        print("dcq-export: nothing to do; pass --features and/or --attention",
              file=sys.stderr)
        return 1
    manifest = ExportManifest(
        model=args.model, images=args.images, weights=args.weights,
        feature_layer=args.layer, cam_layer=args.cam_layer, method=args.method,
        batch_size=args.batch, device=args.device,
        normalize=not args.no_normalize, seed=args.seed)
    try:
        if args.features:
            features = export_features(manifest, args.features)
            print(f"wrote {args.features}: N={features.shape[0]} D={features.shape[1]}")
        if args.attention:
            maps = export_attention(manifest, args.attention)
            print(f"wrote {args.attention}: N={maps.shape[0]} "
                  f"H={maps.shape[1]} W={maps.shape[2]} method={manifest.method}")
    except (FormatError, ValueError, OSError) as err:
        print(f"dcq-export: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
