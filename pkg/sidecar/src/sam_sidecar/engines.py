"""Segmentation engines behind one tiny interface.

``SamEngine`` wraps the segment-anything package (checkpoint required) and is
selected whenever ``--checkpoint`` is given. ``ThresholdEngine`` is the
dependency-free classical fallback (Otsu + connected components) so the
manifest contract can be exercised on any machine.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage


class EngineError(RuntimeError):
    pass


def _to_gray(rgb: np.ndarray) -> np.ndarray:
    return (0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]) / 255.0


def _otsu(data: np.ndarray, bins: int = 256) -> float:
    hist, edges = np.histogram(data.ravel(), bins=bins, range=(0.0, 1.0))
    hist = hist.astype(np.float64)
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(hist)
    w1 = hist.sum() - w0
    m0 = np.cumsum(hist * centers)
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (m0 / w0 - (m0[-1] - m0) / w1) ** 2
    between[~np.isfinite(between)] = -1.0
    ties = np.flatnonzero(between == between.max())
    return float(edges[int(round(float(ties.mean()))) + 1])


class ThresholdEngine:
    """Otsu threshold + 8-connected components over a bright foreground."""

    name = "threshold"

    def auto_masks(self, rgb: np.ndarray) -> list[np.ndarray]:
        gray = _to_gray(rgb.astype(np.float64))
        if gray.max() - gray.min() <= 1e-12:
            return []
        fg = gray > _otsu(gray)
        labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=bool))
        return [labels == i for i in range(1, n + 1)]

    def point_masks(self, rgb: np.ndarray, points: list[tuple[float, float]],
                    mask_select: str) -> list[np.ndarray]:
        components = self.auto_masks(rgb)
        out = []
        for x, y in points:
            px = int(np.floor(x + 0.5))
            py = int(np.floor(y + 0.5))
            if not components:
                continue
            containing = [c for c in components if
                          0 <= py < c.shape[0] and 0 <= px < c.shape[1] and c[py, px]]
            if containing:
                out.append(min(containing, key=lambda c: int(c.sum())))
                continue
            # nearest component by pixel distance
            def dist(comp):
                ys, xs = np.nonzero(comp)
                return float(np.min(np.hypot(xs - x, ys - y)))
            out.append(min(components, key=dist))
        return out


class SamEngine:
    """segment-anything wrapper; needs the package and a readable checkpoint."""

    name = "sam"

    def __init__(self, checkpoint: str, model_type: str = "vit_h", device: str = "cpu"):
        if not os.path.isfile(checkpoint):
            raise EngineError(f"checkpoint not readable: {checkpoint}")
        try:
            from segment_anything import (
                SamAutomaticMaskGenerator,
                SamPredictor,
                sam_model_registry,
            )
        except ImportError as exc:
            raise EngineError(
                "segment-anything is not installed; install it or omit --checkpoint "
                "to use the threshold engine") from exc
        try:
            sam = sam_model_registry[model_type](checkpoint=checkpoint)
        except KeyError as exc:
            raise EngineError(f"unknown SAM model type {model_type!r}") from exc
        sam.to(device)
        self._generator = SamAutomaticMaskGenerator(sam)
        self._predictor = SamPredictor(sam)

    def auto_masks(self, rgb: np.ndarray) -> list[np.ndarray]:
        annotations = self._generator.generate(rgb)
        return [np.asarray(a["segmentation"], dtype=bool) for a in annotations]

    def point_masks(self, rgb: np.ndarray, points: list[tuple[float, float]],
                    mask_select: str) -> list[np.ndarray]:
        self._predictor.set_image(rgb)
        out = []
        for x, y in points:
            masks, scores, _ = self._predictor.predict(
                point_coords=np.array([[x, y]], dtype=np.float64),
                point_labels=np.array([1]),
                multimask_output=True,
            )
            candidates = [np.asarray(m, dtype=bool) for m in masks]
            px, py = int(round(x)), int(round(y))
            if mask_select == "smallest":
                containing = [c for c in candidates if c[py, px]]
                pool = containing or candidates
                out.append(min(pool, key=lambda c: int(c.sum())))
            else:
                out.append(candidates[int(np.argmax(scores))])
        return out


def build_engine(checkpoint: str | None, model_type: str, device: str):
    if checkpoint:
        return SamEngine(checkpoint, model_type=model_type, device=device)
    return ThresholdEngine()
