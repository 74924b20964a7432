"""Dense TV-L1 optical-flow registration between a query and a reference scene.

The solver is the duality-based TV-L1 scheme: a coarse-to-fine pyramid where
each level alternates a pointwise thresholding step on the linearized
brightness residual with a Chambolle-style dual update of the total-variation
regularizer. Flow convention is query-anchored: for query pixel ``p`` the
corresponding reference location is ``p + F(p)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .core import GrayImage, resize_bilinear
from .errors import DimensionMismatch, ImageTooSmall, PointOutOfGrid

FLOW_MAGIC = b"SWFL"

#: Dual ascent step; 0.25 is the standard stable choice for 2-d TV.
_TAU = 0.25
#: Dual iterations per outer fixed-point iteration.
_REG_ITERS = 2


@dataclass(frozen=True)
class FlowParams:
    """TV-L1 solver parameters (defaults are the routine's stock settings)."""

    attachment_weight: float = 15.0   # data-term weight (lambda)
    tightness: float = 0.3            # coupling between flow and auxiliary field (theta)
    warps_per_level: int = 5
    iterations_per_warp: int = 10
    pyramid_downscale: float = 2.0
    min_pyramid_dim: int = 16
    convergence_tol: float = 1e-4
    prefilter: bool = False           # 3x3 median on the flow before each warp

    def __post_init__(self):
        if min(self.attachment_weight, self.tightness, self.convergence_tol) <= 0:
            raise ValueError("flow parameters must be positive")
        if min(self.warps_per_level, self.iterations_per_warp, self.min_pyramid_dim) < 1:
            raise ValueError("flow iteration counts must be >= 1")
        if self.pyramid_downscale <= 1.0:
            raise ValueError("pyramid_downscale must be > 1")


DEFAULT_FLOW_PARAMS = FlowParams()


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement field on the query grid.

    ``du`` is the x-displacement and ``dv`` the y-displacement, both in
    pixels of the working resolution.
    """

    du: np.ndarray
    dv: np.ndarray

    def __post_init__(self):
        du = np.asarray(self.du, dtype=np.float64)
        dv = np.asarray(self.dv, dtype=np.float64)
        if du.ndim != 2 or du.shape != dv.shape:
            raise ValueError(f"flow components must share a 2-d shape, got {du.shape} / {dv.shape}")
        if not (np.isfinite(du).all() and np.isfinite(dv).all()):
            raise ValueError("flow must be finite everywhere")
        for arr in (du, dv):
            arr.setflags(write=False)
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "dv", dv)

    @property
    def width(self) -> int:
        return self.du.shape[1]

    @property
    def height(self) -> int:
        return self.du.shape[0]

    @classmethod
    def zero(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


class MappedPoint(NamedTuple):
    x: float
    y: float
    clamped: bool


class SampledValues(NamedTuple):
    values: np.ndarray  # interpolated intensities
    valid: np.ndarray   # False where the lookup had to be clamped


def _bilinear_gather(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``data`` at float coords with border clamping.

    Returns (values, clamped) where ``clamped`` marks points that fell
    outside the grid.
    """
    h, w = data.shape
    clamped = (xs < 0) | (xs > w - 1) | (ys < 0) | (ys > h - 1)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    top = data[y0, x0] * (1 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1 - fx) + data[y1, x1] * fx
    return top * (1 - fy) + bot * fy, clamped


def _forward_gradient(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    div = np.zeros_like(px)
    div[:, 0] += px[:, 0]
    div[:, 1:] += px[:, 1:] - px[:, :-1]
    div[0, :] += py[0, :]
    div[1:, :] += py[1:, :] - py[:-1, :]
    return div


def _tv_prox(v: np.ndarray, px: np.ndarray, py: np.ndarray, theta: float,
             n_iters: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Approximate TV proximal step via Chambolle dual ascent."""
    c = _TAU / theta
    for _ in range(n_iters):
        u = v + theta * _divergence(px, py)
        gx, gy = _forward_gradient(u)
        norm = 1.0 + c * np.sqrt(gx * gx + gy * gy)
        px = (px + c * gx) / norm
        py = (py + c * gy) / norm
    return v + theta * _divergence(px, py), px, py


def _solve_level(i0: np.ndarray, i1: np.ndarray, du: np.ndarray, dv: np.ndarray,
                 params: FlowParams) -> tuple[np.ndarray, np.ndarray]:
    h, w = i0.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    lt = params.attachment_weight * params.tightness
    tol2 = params.convergence_tol ** 2
    p11 = np.zeros_like(du)
    p12 = np.zeros_like(du)
    p21 = np.zeros_like(du)
    p22 = np.zeros_like(du)

    for _ in range(params.warps_per_level):
        if params.prefilter:
            du = ndimage.median_filter(du, size=3, mode="nearest")
            dv = ndimage.median_filter(dv, size=3, mode="nearest")
        du0, dv0 = du.copy(), dv.copy()
        i1w, _ = _bilinear_gather(i1, xs + du0, ys + dv0)
        gy_, gx_ = np.gradient(i1w)
        grad2 = gx_ * gx_ + gy_ * gy_
        denom = np.where(grad2 == 0.0, 1.0, grad2)
        rho_c = i1w - i0 - gx_ * du0 - gy_ * dv0

        for _ in range(params.iterations_per_warp):
            du_prev, dv_prev = du, dv
            rho = rho_c + gx_ * du + gy_ * dv
            # pointwise minimizer of lambda*theta*|rho| + 1/2 |v - u|^2
            step = np.where(rho < -lt * grad2, lt,
                            np.where(rho > lt * grad2, -lt, -rho / denom))
            v1 = du + step * gx_
            v2 = dv + step * gy_
            du, p11, p12 = _tv_prox(v1, p11, p12, params.tightness, _REG_ITERS)
            dv, p21, p22 = _tv_prox(v2, p21, p22, params.tightness, _REG_ITERS)
            err = np.mean((du - du_prev) ** 2 + (dv - dv_prev) ** 2)
            if err < tol2:
                break
    return du, dv


def _pyramid(data: np.ndarray, params: FlowParams) -> list[np.ndarray]:
    """Levels ordered fine to coarse; coarsest keeps min dim >= min_pyramid_dim."""
    levels = [data]
    sigma = params.pyramid_downscale / 3.0
    while True:
        cur = levels[-1]
        new_h = int(round(cur.shape[0] / params.pyramid_downscale))
        new_w = int(round(cur.shape[1] / params.pyramid_downscale))
        if min(new_h, new_w) < params.min_pyramid_dim:
            break
        smoothed = ndimage.gaussian_filter(cur, sigma, mode="nearest")
        levels.append(resize_bilinear(smoothed, new_h, new_w))
    return levels


def estimate_flow(query: GrayImage, reference: GrayImage,
                  params: FlowParams = DEFAULT_FLOW_PARAMS) -> FlowField:
    """Estimate the dense field F with reference(p + F(p)) ~ query(p).

    Deterministic for fixed inputs and parameters. Raises DimensionMismatch
    when the two images differ in size and ImageTooSmall when the grid is
    below the coarsest pyramid size.
    """
    if (query.width, query.height) != (reference.width, reference.height):
        raise DimensionMismatch(
            f"query {query.width}x{query.height} vs reference {reference.width}x{reference.height}"
        )
    if min(query.width, query.height) < params.min_pyramid_dim:
        raise ImageTooSmall(
            f"need at least {params.min_pyramid_dim} px per side, got {query.width}x{query.height}"
        )
    pyr_q = _pyramid(query.data.astype(np.float64), params)
    pyr_r = _pyramid(reference.data.astype(np.float64), params)

    du = dv = None
    for i0, i1 in zip(reversed(pyr_q), reversed(pyr_r)):
        h, w = i0.shape
        if du is None:
            du = np.zeros((h, w))
            dv = np.zeros((h, w))
        else:
            sx = w / du.shape[1]
            sy = h / du.shape[0]
            du = resize_bilinear(du, h, w) * sx
            dv = resize_bilinear(dv, h, w) * sy
        du, dv = _solve_level(i0, i1, du, dv, params)
    return FlowField(du, dv)


def map_point(p: tuple[float, float], flow: FlowField) -> MappedPoint:
    """Map a query-grid point into the reference frame via p + F(p).

    F is bilinearly interpolated at non-integer points; the result is clamped
    to the reference grid, with ``clamped`` set whenever clamping occurred.
    """
    x, y = float(p[0]), float(p[1])
    if not (0 <= x <= flow.width - 1 and 0 <= y <= flow.height - 1):
        raise PointOutOfGrid(f"point ({x}, {y}) outside {flow.width}x{flow.height} grid")
    fx, _ = _bilinear_gather(flow.du, np.array([x]), np.array([y]))
    fy, _ = _bilinear_gather(flow.dv, np.array([x]), np.array([y]))
    tx = x + float(fx[0])
    ty = y + float(fy[0])
    cx = min(max(tx, 0.0), flow.width - 1.0)
    cy = min(max(ty, 0.0), flow.height - 1.0)
    return MappedPoint(cx, cy, clamped=(cx != tx or cy != ty))


def sample_reference(reference: GrayImage, pts: np.ndarray) -> SampledValues:
    """Bilinearly sample reference intensities at (x, y) reference-frame points.

    Points that needed border clamping are flagged invalid; their clamped
    intensity is still returned.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    if not np.isfinite(pts).all():
        raise ValueError("sample points must be finite")
    values, clamped = _bilinear_gather(reference.data, pts[:, 0], pts[:, 1])
    return SampledValues(values, ~clamped)


def data_term_residual(query: GrayImage, reference: GrayImage, flow: FlowField) -> float:
    """Mean absolute brightness residual |query(p) - reference(p + F(p))|."""
    h, w = query.data.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    warped, _ = _bilinear_gather(reference.data, xs + flow.du, ys + flow.dv)
    return float(np.mean(np.abs(query.data - warped)))


def save_flow(path: str, flow: FlowField) -> None:
    """Write the binary dump: magic, u32 width/height, then du, dv as f32."""
    header = FLOW_MAGIC + np.array([flow.width, flow.height], dtype="<u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flow.du.astype("<f4").tobytes())
        fh.write(flow.dv.astype("<f4").tobytes())


def load_flow(path: str) -> FlowField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FLOW_MAGIC:
        raise ValueError(f"{path}: not a flow dump (bad magic)")
    w, h = (int(v) for v in np.frombuffer(blob[4:12], dtype="<u4"))
    expected = 12 + 2 * 4 * w * h
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated flow dump ({len(blob)} bytes, expected {expected})")
    floats = np.frombuffer(blob[12:], dtype="<f4").astype(np.float64)
    du = floats[: w * h].reshape(h, w)
    dv = floats[w * h:].reshape(h, w)
    return FlowField(du, dv)
