"""Shared domain types, grayscale conversion, and the RLE mask codec.

Every raster is row-major with pixel centers at integer coordinates:
``(x, y)`` addresses column ``x`` of row ``y``. Masks cross the
segmentation boundary as alternating run-length counts, first run counting
0-pixels (possibly zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RunSumMismatch

#: Rec.601 luma weights used for all grayscale conversion.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

#: Long-side cap applied before registration; larger captures are downscaled.
MAX_WORKING_SIDE = 1024


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GrayImage:
    """Normalized-intensity raster, shape (height, width), values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"GrayImage needs a 2-d raster, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("GrayImage intensities must be finite")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("GrayImage intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster, shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.uint8)
        if data.ndim != 3 or data.shape[2] != 3 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"RgbImage needs shape (h, w, 3), got {data.shape}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class Scene:
    """One captured photo of a monitored location."""

    id: str
    image_path: str
    captured_at: str
    role: str  # "reference" | "query"

    def __post_init__(self):
        if self.role not in ("reference", "query"):
            raise ValueError(f"scene role must be reference|query, got {self.role!r}")


@dataclass(frozen=True)
class LabelRecord:
    """Human decision for one segment of a query scene."""

    scene_id: str
    reference_id: str
    segment_id: str
    label: str  # "anomaly" | "normal"
    labeled_by: str = ""
    labeled_at: str = ""

    def __post_init__(self):
        if self.label not in ("anomaly", "normal"):
            raise ValueError(f"label must be anomaly|normal, got {self.label!r}")


def to_grayscale(img: RgbImage) -> GrayImage:
    """Convert 8-bit RGB to normalized Rec.601 luma, clamped to [0, 1]."""
    wr, wg, wb = LUMA_WEIGHTS
    rgb = img.data.astype(np.float64)
    luma = (wr * rgb[:, :, 0] + wg * rgb[:, :, 1] + wb * rgb[:, :, 2]) / 255.0
    return GrayImage(np.clip(luma, 0.0, 1.0))


def encode_rle(mask_bits: np.ndarray) -> list[int]:
    """Encode a row-major binary raster as alternating run counts.

    The first count always refers to 0-pixels and may itself be zero, which
    makes the stream self-delimiting: decode needs only (runs, width, height).
    """
    flat = np.asarray(mask_bits, dtype=bool).ravel()
    if flat.size == 0:
        return []
    # indices where the value changes, as run boundaries
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode_rle(runs: list[int], width: int, height: int) -> np.ndarray:
    """Inverse of :func:`encode_rle`; returns a (height, width) bool raster."""
    runs_arr = np.asarray(runs, dtype=np.int64)
    if runs_arr.size and runs_arr.min() < 0:
        raise RunSumMismatch("run counts must be non-negative")
    total = int(runs_arr.sum()) if runs_arr.size else 0
    if total != width * height:
        raise RunSumMismatch(
            f"run counts sum to {total}, expected {width}x{height}={width * height}"
        )
    values = np.arange(runs_arr.size) % 2  # runs alternate 0,1,0,1,...
    flat = np.repeat(values.astype(bool), runs_arr)
    return flat.reshape(height, width)


def bbox_center(bbox: tuple[int, int, int, int]) -> tuple[float, float]:
    """Center of a (x, y, w, h) box in pixel-center coordinates."""
    x, y, w, h = bbox
    return (x + (w - 1) / 2.0, y + (h - 1) / 2.0)


@dataclass(frozen=True)
class SegmentMask:
    """One object's binary mask at scene size, carried as RLE.

    ``bbox`` is the tight (x, y, w, h) box of the 1-pixels and ``center`` is
    the bbox center; the center is kept even if it falls outside a concave
    mask, since downstream consumers only need a deterministic prompt point.
    """

    id: str
    width: int
    height: int
    rle: tuple[int, ...]
    bbox: tuple[int, int, int, int]
    area: int
    center: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "rle", tuple(int(r) for r in self.rle))
        object.__setattr__(self, "bbox", tuple(int(v) for v in self.bbox))
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        self.validate()

    @classmethod
    def from_raster(cls, segment_id: str, raster: np.ndarray) -> "SegmentMask":
        raster = np.asarray(raster, dtype=bool)
        if raster.ndim != 2:
            raise ValueError(f"mask raster must be 2-d, got shape {raster.shape}")
        ys, xs = np.nonzero(raster)
        if ys.size == 0:
            raise ValueError("segment mask must contain at least one pixel")
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        bbox = (x0, y0, x1 - x0 + 1, y1 - y0 + 1)
        return cls(
            id=segment_id,
            width=raster.shape[1],
            height=raster.shape[0],
            rle=tuple(encode_rle(raster)),
            bbox=bbox,
            area=int(ys.size),
            center=bbox_center(bbox),
        )

    def decode(self) -> np.ndarray:
        return decode_rle(list(self.rle), self.width, self.height)

    def contains(self, x: float, y: float) -> bool:
        """Whether the nearest pixel to (x, y) is a 1-pixel of this mask."""
        px = int(math.floor(x + 0.5))
        py = int(math.floor(y + 0.5))
        if px < 0 or py < 0 or px >= self.width or py >= self.height:
            return False
        return bool(self.decode()[py, px])

    def validate(self) -> None:
        """Re-derive area/bbox/center from the RLE and compare to stored fields."""
        if self.width < 1 or self.height < 1:
            raise ValueError("mask dimensions must be >= 1")
        raster = self.decode()  # raises RunSumMismatch on bad runs
        ys, xs = np.nonzero(raster)
        if ys.size == 0:
            raise ValueError(f"segment {self.id!r} has no 1-pixels")
        if int(ys.size) != self.area:
            raise ValueError(
                f"segment {self.id!r}: stored area {self.area} != derived {int(ys.size)}"
            )
        bbox = (int(xs.min()), int(ys.min()),
                int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
        if bbox != self.bbox:
            raise ValueError(f"segment {self.id!r}: stored bbox {self.bbox} != derived {bbox}")
        center = bbox_center(bbox)
        if not (math.isclose(center[0], self.center[0], abs_tol=1e-9)
                and math.isclose(center[1], self.center[1], abs_tol=1e-9)):
            raise ValueError(f"segment {self.id!r}: stored center {self.center} != derived {center}")


def resize_bilinear(data: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel alignment and border clamping."""
    h, w = data.shape[:2]
    if (new_h, new_w) == (h, w):
        return data.copy()
    ys = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if data.ndim == 3:
        wy = wy[:, :, None]
        wx = wx[:, :, None]
    top = data[y0][:, x0] * (1 - wx) + data[y0][:, x1] * wx
    bot = data[y1][:, x0] * (1 - wx) + data[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def fit_working_resolution(gray: GrayImage, max_side: int = MAX_WORKING_SIDE) -> tuple[GrayImage, float]:
    """Downscale so the long side is at most ``max_side``; returns (image, scale).

    Scale is the working/original factor (1.0 when no downscale happened);
    all downstream coordinates are expressed at the working resolution.
    """
    long_side = max(gray.width, gray.height)
    if long_side <= max_side:
        return gray, 1.0
    scale = max_side / long_side
    new_w = max(1, int(round(gray.width * scale)))
    new_h = max(1, int(round(gray.height * scale)))
    resized = np.clip(resize_bilinear(gray.data, new_h, new_w), 0.0, 1.0)
    return GrayImage(resized), scale
