"""Sidecar CLI.

Invocation contract with the consumer:

    sam-sidecar --image <path> --out <manifest> [--points <file>]

Exit 0 plus a schema-valid manifest means success; any failure exits nonzero
and leaves no partial output (writes go to a temp file renamed on success).
Points mode is selected by ``--points`` (a JSON list of [x, y]) and emits one
mask per prompt point.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from PIL import Image

from .engines import EngineError, build_engine
from .masks import write_manifest

DEFAULT_MIN_AREA = 32
DEFAULT_MAX_AREA_FRAC = 0.9


def load_points(path: str) -> list[tuple[float, float]]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list) or not all(
            isinstance(p, list) and len(p) == 2 for p in doc):
        raise ValueError(f"{path}: points file must be a JSON list of [x, y]")
    return [(float(x), float(y)) for x, y in doc]


def filter_masks(rasters: list[np.ndarray], min_area: int,
                 max_area_frac: float) -> list[np.ndarray]:
    """Drop specks and scene-sized background masks."""
    out = []
    for raster in rasters:
        area = int(raster.sum())
        if area < min_area:
            continue
        if area > max_area_frac * raster.size:
            continue
        out.append(raster)
    return out


def run(args) -> int:
    image = Image.open(args.image).convert("RGB")
    rgb = np.asarray(image)
    engine = build_engine(args.checkpoint, args.model_type, args.device)

    if args.points:
        points = load_points(args.points)
        rasters = engine.point_masks(rgb, points, args.mask_select)
    else:
        rasters = filter_masks(engine.auto_masks(rgb), args.min_area,
                               args.max_area_frac)

    write_manifest(args.out, args.image, rasters, rgb.shape[1], rgb.shape[0])
    print(f"{args.out}: {len(rasters)} segments ({engine.name} engine)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sam-sidecar",
        description="Segment an image and emit a scenewatch mask manifest.",
    )
    parser.add_argument("--image", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--points", help="JSON list of [x, y] prompt points")
    parser.add_argument("--checkpoint", help="SAM checkpoint; omit for the "
                                             "classical threshold engine")
    parser.add_argument("--model-type", default="vit_h")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--mask-select", choices=["best", "smallest"], default="best",
                        help="multi-mask disambiguation for point prompts")
    parser.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA)
    parser.add_argument("--max-area-frac", type=float, default=DEFAULT_MAX_AREA_FRAC)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (EngineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
