"""Pluggable segmentation behind two capabilities: whole-scene and point-prompted.

Three backends satisfy the same contract:

* ``builtin``  - global Otsu threshold + 8-connected components, a
  deterministic dependency-free baseline for tests and desk-scale runs.
  Assumes bright foreground on a darker background.
* ``manifest`` - pass-through of a previously produced mask manifest, the
  boundary format toward external segmenter sidecars.
* ``sidecar``  - invokes an external command that writes a manifest.

Masks may overlap; no partition is enforced.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import GrayImage, SegmentMask
from .errors import (
    BackendUnavailable,
    ManifestNotFound,
    ManifestSchemaError,
    PointOutOfBounds,
)

MANIFEST_SCHEMA = "scenewatch-manifest/1"

#: Components smaller than this are dropped by the builtin backend.
DEFAULT_MIN_AREA = 32


@dataclass(frozen=True)
class SceneContext:
    """Everything a backend may need to resolve one scene."""

    scene_id: str
    gray: GrayImage | None = None
    manifest_path: str | None = None
    image_path: str | None = None


def otsu_threshold(data: np.ndarray, bins: int = 256) -> float:
    """Otsu's between-class-variance threshold over [0, 1] intensities.

    Returns the upper edge of the cut bin; histogram gaps between the two
    modes tie on variance, so the middle of the tied plateau is used to keep
    the threshold clear of both modes. Foreground is ``data > threshold``.
    """
    hist, edges = np.histogram(data.ravel(), bins=bins, range=(0.0, 1.0))
    hist = hist.astype(np.float64)
    total = hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(hist)
    w1 = total - w0
    m0 = np.cumsum(hist * centers)
    mt = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (mt - m0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    ties = np.flatnonzero(between == between.max())
    cut = int(round(float(ties.mean())))
    return float(edges[cut + 1])


class BuiltinBackend:
    """Otsu threshold + 8-connected components + minimum-area filter."""

    kind = "builtin"

    def __init__(self, min_area: int = DEFAULT_MIN_AREA, threshold: float | None = None):
        self.min_area = int(min_area)
        self.threshold = threshold
        self._cache: dict[str, tuple[np.ndarray, list[SegmentMask]]] = {}

    def _labelled(self, ctx: SceneContext) -> tuple[np.ndarray, list[SegmentMask]]:
        if ctx.gray is None:
            raise BackendUnavailable(f"builtin backend needs image data for scene {ctx.scene_id!r}")
        cached = self._cache.get(ctx.scene_id)
        if cached is not None:
            return cached
        data = ctx.gray.data
        if data.max() - data.min() <= 1e-12:
            result: tuple[np.ndarray, list[SegmentMask]] = (np.zeros(data.shape, dtype=np.int32), [])
            self._cache[ctx.scene_id] = result
            return result
        thr = self.threshold if self.threshold is not None else otsu_threshold(data)
        fg = data > thr
        labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=bool))
        masks = []
        kept = np.zeros(labels.shape, dtype=np.int32)
        next_id = 0
        for lab in range(1, n + 1):
            raster = labels == lab
            if int(raster.sum()) < self.min_area:
                continue
            masks.append(SegmentMask.from_raster(f"s{next_id}", raster))
            kept[raster] = next_id + 1
            next_id += 1
        result = (kept, masks)
        self._cache[ctx.scene_id] = result
        return result

    def segment_all(self, ctx: SceneContext) -> list[SegmentMask]:
        return list(self._labelled(ctx)[1])

    def segment_at(self, ctx: SceneContext, point: tuple[float, float]) -> SegmentMask | None:
        labels, masks = self._labelled(ctx)
        px, py = _round_point_in_bounds(point, labels.shape[1], labels.shape[0])
        lab = int(labels[py, px])
        return masks[lab - 1] if lab > 0 else None


class ManifestBackend:
    """Serves masks straight from manifest files, one per scene."""

    kind = "manifest"

    def __init__(self, manifest_paths: dict[str, str] | None = None):
        # scene_id -> manifest path; SceneContext.manifest_path wins if set
        self.manifest_paths = dict(manifest_paths or {})
        self._cache: dict[str, list[SegmentMask]] = {}

    def _resolve(self, ctx: SceneContext) -> str:
        path = ctx.manifest_path or self.manifest_paths.get(ctx.scene_id)
        if not path:
            raise ManifestNotFound(f"no manifest registered for scene {ctx.scene_id!r}")
        return path

    def segment_all(self, ctx: SceneContext) -> list[SegmentMask]:
        path = self._resolve(ctx)
        if path not in self._cache:
            self._cache[path] = load_manifest(path)
        return list(self._cache[path])

    def segment_at(self, ctx: SceneContext, point: tuple[float, float]) -> SegmentMask | None:
        masks = self.segment_all(ctx)
        if not masks:
            return None
        w, h = masks[0].width, masks[0].height
        _round_point_in_bounds(point, w, h)
        return pick_mask_at_point(masks, point)


class SidecarBackend:
    """Runs an external segmenter command that emits a manifest file.

    Invocation contract: ``<cmd...> --image <path> --out <manifest>
    [--points <points-file>]``; exit 0 plus a schema-valid manifest means
    success.
    """

    kind = "sidecar"

    def __init__(self, command: list[str], workdir: str | None = None):
        if not command:
            raise BackendUnavailable("sidecar backend needs a command")
        self.command = list(command)
        self.workdir = workdir
        self._cache: dict[str, list[SegmentMask]] = {}

    def _invoke(self, ctx: SceneContext, points: list[tuple[float, float]] | None) -> list[SegmentMask]:
        if not ctx.image_path:
            raise BackendUnavailable(f"sidecar backend needs an image path for scene {ctx.scene_id!r}")
        with tempfile.TemporaryDirectory(prefix="scenewatch-sidecar-") as tmp:
            out_path = os.path.join(tmp, "manifest.json")
            argv = self.command + ["--image", ctx.image_path, "--out", out_path]
            if points is not None:
                pts_path = os.path.join(tmp, "points.json")
                with open(pts_path, "w", encoding="utf-8") as fh:
                    json.dump([[float(x), float(y)] for x, y in points], fh)
                argv += ["--points", pts_path]
            try:
                proc = subprocess.run(argv, cwd=self.workdir, capture_output=True, text=True)
            except OSError as exc:
                raise BackendUnavailable(f"sidecar command failed to start: {exc}") from exc
            if proc.returncode != 0:
                raise BackendUnavailable(
                    f"sidecar exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            return load_manifest(out_path)

    def segment_all(self, ctx: SceneContext) -> list[SegmentMask]:
        if ctx.scene_id not in self._cache:
            self._cache[ctx.scene_id] = self._invoke(ctx, None)
        return list(self._cache[ctx.scene_id])

    def segment_at(self, ctx: SceneContext, point: tuple[float, float]) -> SegmentMask | None:
        if ctx.gray is not None:
            _round_point_in_bounds(point, ctx.gray.width, ctx.gray.height)
        masks = self._invoke(ctx, [point])
        if not masks:
            return None
        containing = pick_mask_at_point(masks, point)
        return containing if containing is not None else masks[0]


def _round_point_in_bounds(point: tuple[float, float], width: int, height: int) -> tuple[int, int]:
    x, y = float(point[0]), float(point[1])
    if not (0 <= x <= width - 1 and 0 <= y <= height - 1):
        raise PointOutOfBounds(f"point ({x}, {y}) outside {width}x{height} scene")
    return int(math.floor(x + 0.5)), int(math.floor(y + 0.5))


def pick_mask_at_point(masks: list[SegmentMask], point: tuple[float, float]) -> SegmentMask | None:
    """Smallest-area mask containing the point, ties broken by id."""
    containing = [m for m in masks if m.contains(point[0], point[1])]
    if not containing:
        return None
    return min(containing, key=lambda m: (m.area, m.id))


def load_manifest(path: str) -> list[SegmentMask]:
    """Load and validate a mask manifest; raises field-level schema errors."""
    if not os.path.exists(path):
        raise ManifestNotFound(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestSchemaError(f"{path}: invalid JSON: {exc}") from exc
    return parse_manifest(doc, source=path)


def parse_manifest(doc: dict, source: str = "<manifest>") -> list[SegmentMask]:
    def fail(field_name: str, message: str):
        raise ManifestSchemaError(f"{source}: {field_name}: {message}")

    if not isinstance(doc, dict):
        fail("$", "manifest must be a JSON object")
    if doc.get("schema") != MANIFEST_SCHEMA:
        fail("schema", f"expected {MANIFEST_SCHEMA!r}, got {doc.get('schema')!r}")
    width = doc.get("width")
    height = doc.get("height")
    if not isinstance(width, int) or not isinstance(height, int) or width < 1 or height < 1:
        fail("width/height", f"must be positive integers, got {width!r}x{height!r}")
    segments = doc.get("segments")
    if not isinstance(segments, list):
        fail("segments", "must be a list")

    masks: list[SegmentMask] = []
    seen: set[str] = set()
    for i, entry in enumerate(segments):
        where = f"segments[{i}]"
        if not isinstance(entry, dict):
            fail(where, "must be an object")
        seg_id = entry.get("id")
        if not isinstance(seg_id, str) or not seg_id:
            fail(f"{where}.id", "must be a non-empty string")
        if seg_id in seen:
            fail(f"{where}.id", f"duplicate segment id {seg_id!r}")
        seen.add(seg_id)
        rle = entry.get("rle")
        if (not isinstance(rle, list) or not rle
                or any((not isinstance(r, int)) or r < 0 for r in rle)):
            fail(f"{where}.rle", "must be a non-empty list of non-negative ints")
        if sum(rle) != width * height:
            fail(f"{where}.rle", f"runs sum to {sum(rle)}, expected {width * height}")
        bbox = entry.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4:
            fail(f"{where}.bbox", "must be [x, y, w, h]")
        area = entry.get("area")
        if not isinstance(area, int) or area < 1:
            fail(f"{where}.area", "must be a positive integer")
        center = entry.get("center")
        if not isinstance(center, list) or len(center) != 2:
            fail(f"{where}.center", "must be [cx, cy]")
        try:
            mask = SegmentMask(
                id=seg_id, width=width, height=height, rle=tuple(rle),
                bbox=tuple(bbox), area=area, center=tuple(center),
            )
        except ValueError as exc:
            fail(where, str(exc))
        masks.append(mask)
    return masks


def manifest_document(image_path: str, width: int, height: int,
                      masks: list[SegmentMask]) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "image": image_path,
        "width": int(width),
        "height": int(height),
        "segments": [
            {
                "id": m.id,
                "bbox": list(m.bbox),
                "area": m.area,
                "center": [m.center[0], m.center[1]],
                "rle": list(m.rle),
            }
            for m in masks
        ],
    }


def save_manifest(path: str, image_path: str, width: int, height: int,
                  masks: list[SegmentMask]) -> None:
    for m in masks:
        if (m.width, m.height) != (width, height):
            raise ManifestSchemaError(
                f"segment {m.id!r} is {m.width}x{m.height}, manifest is {width}x{height}"
            )
    doc = manifest_document(image_path, width, height, masks)
    blob = json.dumps(doc, indent=2) + "\n"
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8") as fh:
        fh.write(blob)
    os.replace(tmp_path, path)


def make_backend(config: dict):
    """Build a backend from a workspace config dict ({"kind": ..., ...})."""
    kind = config.get("kind", "builtin")
    if kind == "builtin":
        return BuiltinBackend(
            min_area=config.get("min_area", DEFAULT_MIN_AREA),
            threshold=config.get("threshold"),
        )
    if kind == "manifest":
        return ManifestBackend(config.get("manifests"))
    if kind == "sidecar":
        return SidecarBackend(config.get("cmd", []), workdir=config.get("workdir"))
    raise BackendUnavailable(f"unknown backend kind {kind!r}")
