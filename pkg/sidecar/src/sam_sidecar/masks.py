"""Manifest emission for the scenewatch boundary format.

The manifest schema is the only coupling to the consumer: alternating RLE
counts starting with a (possibly zero) run of 0-pixels, plus area/bbox/center
fields that the consumer re-derives from the RLE and cross-checks.
"""

from __future__ import annotations

import json
import os

import numpy as np

MANIFEST_SCHEMA = "scenewatch-manifest/1"


def encode_rle(raster: np.ndarray) -> list[int]:
    flat = np.asarray(raster, dtype=bool).ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def mask_entry(seg_id: str, raster: np.ndarray) -> dict:
    ys, xs = np.nonzero(raster)
    if ys.size == 0:
        raise ValueError(f"segment {seg_id!r} has no pixels")
    x0, y0 = int(xs.min()), int(ys.min())
    w = int(xs.max()) - x0 + 1
    h = int(ys.max()) - y0 + 1
    return {
        "id": seg_id,
        "bbox": [x0, y0, w, h],
        "area": int(ys.size),
        "center": [x0 + (w - 1) / 2.0, y0 + (h - 1) / 2.0],
        "rle": encode_rle(raster),
    }


def write_manifest(out_path: str, image_path: str, rasters: list[np.ndarray],
                   width: int, height: int) -> None:
    """Write atomically: temp file in the target directory, rename on success."""
    doc = {
        "schema": MANIFEST_SCHEMA,
        "image": image_path,
        "width": int(width),
        "height": int(height),
        "segments": [mask_entry(f"s{i}", r) for i, r in enumerate(rasters)],
    }
    tmp_path = out_path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")
    os.replace(tmp_path, out_path)
