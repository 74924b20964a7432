"""The three per-segment anomaly features of a registered scene pair.

For a query-scene segment the features are:

* ``cosine``    - cosine distance between the segment's query intensities and
  the reference intensities sampled at the flow-mapped pixels. Invariant to
  global illumination scaling of either scene.
* ``disparity`` - Procrustes disparity between the segment's pixel cloud and
  its flow-warped counterpart; similarity transforms score zero, so any
  residual measures non-rigid deformation introduced by registration.
* ``area_diff`` - normalized difference between the segment area and the area
  of the mask prompted at the mapped center in the reference scene; 1.0 when
  the prompt hits nothing (object missing from the reference).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import GrayImage, SegmentMask
from .errors import DimensionMismatch, EmptyVector, LengthMismatch
from .registration import FlowField, map_point, sample_reference
from .segmentation import SceneContext

#: Mask pixel clouds are subsampled to at most this many points.
MAX_SHAPE_POINTS = 2048

#: Fraction of clamped correspondences above which a segment is low-confidence.
LOW_CONFIDENCE_CLAMP_FRACTION = 0.2

FEATURE_CSV_HEADER = ["scene_id", "segment_id", "cosine", "disparity", "area_diff",
                      "low_confidence", "label"]


@dataclass(frozen=True)
class FeatureVector:
    cosine: float
    disparity: float
    area_diff: float
    low_confidence: bool = False

    def __post_init__(self):
        values = (self.cosine, self.disparity, self.area_diff)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"features must be finite, got {values}")
        if not (0.0 <= self.cosine <= 1.0 and 0.0 <= self.area_diff <= 1.0):
            raise ValueError(f"cosine/area_diff must lie in [0,1], got {values}")
        if self.disparity < 0.0:
            raise ValueError(f"disparity must be >= 0, got {self.disparity}")

    def as_array(self) -> np.ndarray:
        return np.array([self.cosine, self.disparity, self.area_diff])


class ProcrustesResult(NamedTuple):
    value: float
    degenerate: bool


def cosine_intensity_distance(query_vals: np.ndarray, ref_vals: np.ndarray) -> float:
    """1 - cos(a, b); 0 when both vectors are zero-norm, 1 when exactly one is."""
    a = np.asarray(query_vals, dtype=np.float64).ravel()
    b = np.asarray(ref_vals, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyVector("intensity vectors must have length >= 1")
    if a.size != b.size:
        raise LengthMismatch(f"vector lengths differ: {a.size} vs {b.size}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 0.0
    if na == 0.0 or nb == 0.0:
        return 1.0
    sim = float(np.dot(a, b)) / (na * nb)
    return float(min(max(1.0 - sim, 0.0), 1.0))


def procrustes_disparity(a: np.ndarray, b: np.ndarray) -> ProcrustesResult:
    """Residual sum of squared distances after optimal similarity alignment.

    Both point sets are standardized (centroid removed, unit root sum of
    squares), then the orthogonal matrix (reflection allowed) minimizing the
    summed squared pointwise distance is found from the SVD of the
    cross-covariance. Degenerate inputs (fewer than 3 points, or zero spread)
    yield 0 with the degenerate flag set.
    """
    pa = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    pb = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if pa.shape != pb.shape:
        raise LengthMismatch(f"point sets differ in shape: {pa.shape} vs {pb.shape}")
    if pa.shape[0] < 3:
        return ProcrustesResult(0.0, True)
    pa = pa - pa.mean(axis=0)
    pb = pb - pb.mean(axis=0)
    sa = float(np.sqrt((pa ** 2).sum()))
    sb = float(np.sqrt((pb ** 2).sum()))
    if sa <= 1e-300 or sb <= 1e-300:
        return ProcrustesResult(0.0, True)
    pa /= sa
    pb /= sb
    # optimal orthogonal alignment: rotate b onto a
    u, s, vt = np.linalg.svd(pa.T @ pb)
    scale = float(s.sum())  # optimal uniform scale for the standardized sets
    disparity = max(0.0, 1.0 - scale ** 2)
    return ProcrustesResult(disparity, False)


def segment_shape_points(mask: SegmentMask, flow: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Mask pixel coordinates and their flow-warped correspondences.

    Original points are the 1-pixels in row-major order, subsampled with a
    fixed stride to at most MAX_SHAPE_POINTS; warped_i = original_i +
    F(original_i), correspondence by index.
    """
    if (mask.width, mask.height) != (flow.width, flow.height):
        raise DimensionMismatch(
            f"mask {mask.width}x{mask.height} vs flow {flow.width}x{flow.height}"
        )
    ys, xs = np.nonzero(mask.decode())
    n = xs.size
    stride = max(1, int(math.ceil(n / MAX_SHAPE_POINTS)))
    xs = xs[::stride]
    ys = ys[::stride]
    original = np.stack([xs, ys], axis=1).astype(np.float64)
    warped = original + np.stack([flow.du[ys, xs], flow.dv[ys, xs]], axis=1)
    return original, warped


def area_signature_diff(area_q: int, area_r: int | None) -> float:
    """Normalized segment-area difference; missing reference object scores 1."""
    if area_q < 1:
        raise ValueError(f"query area must be >= 1, got {area_q}")
    if area_r is None:
        return 1.0
    big = max(area_q, area_r)
    return abs(area_q - area_r) / big if big > 0 else 0.0


def extract_features(query: GrayImage, reference: GrayImage, mask: SegmentMask,
                     flow: FlowField, backend, reference_ctx: SceneContext) -> FeatureVector:
    """All three features for one query segment. Pure and deterministic."""
    if (query.width, query.height) != (mask.width, mask.height):
        raise DimensionMismatch(
            f"query {query.width}x{query.height} vs mask {mask.width}x{mask.height}"
        )
    if (reference.width, reference.height) != (flow.width, flow.height):
        raise DimensionMismatch(
            f"reference {reference.width}x{reference.height} vs flow {flow.width}x{flow.height}"
        )

    ys, xs = np.nonzero(mask.decode())
    mapped = np.stack(
        [xs + flow.du[ys, xs], ys + flow.dv[ys, xs]], axis=1
    )
    sampled = sample_reference(reference, mapped)
    cosine = cosine_intensity_distance(query.data[ys, xs], sampled.values)
    clamped_fraction = 1.0 - float(np.mean(sampled.valid))
    low_confidence = clamped_fraction > LOW_CONFIDENCE_CLAMP_FRACTION

    original, warped = segment_shape_points(mask, flow)
    disparity = procrustes_disparity(original, warped).value

    prompt = map_point(mask.center, flow)
    ref_mask = backend.segment_at(reference_ctx, (prompt.x, prompt.y))
    area_diff = area_signature_diff(mask.area, ref_mask.area if ref_mask else None)

    return FeatureVector(
        cosine=cosine,
        disparity=disparity,
        area_diff=area_diff,
        low_confidence=low_confidence,
    )


def write_feature_csv(path: str, rows: list[dict]) -> None:
    """Feature export; each row needs the FEATURE_CSV_HEADER keys (label may be "")."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_CSV_HEADER)
        for row in rows:
            writer.writerow([
                row["scene_id"],
                row["segment_id"],
                f"{row['cosine']:.9g}",
                f"{row['disparity']:.9g}",
                f"{row['area_diff']:.9g}",
                "true" if row["low_confidence"] else "false",
                row.get("label", "") or "",
            ])
