"""End-to-end orchestration: register, segment, featurize, classify, report.

Also hosts the labeled-training-set builder, red-overlay rendering, and the
seeded synthetic benchmark generator used as a desk-scale surrogate for real
monitoring captures.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import classifier
from .core import (
    GrayImage,
    LabelRecord,
    RgbImage,
    Scene,
    SegmentMask,
    fit_working_resolution,
    resize_bilinear,
    to_grayscale,
)
from .errors import (
    DanglingLabel,
    MaskReportMismatch,
    MissingManifest,
    ReportSchemaError,
)
from .features import FeatureVector, extract_features
from .registration import DEFAULT_FLOW_PARAMS, FlowField, FlowParams, estimate_flow
from .segmentation import SceneContext, load_manifest, save_manifest
from .workspace import SUBDIRS, ScenePair, Workspace, save_labels, write_json_atomic

REPORT_SCHEMA = "scenewatch-report/1"

OVERLAY_COLOR = (255, 0, 0)
OVERLAY_ALPHA = 0.5


@dataclass(frozen=True)
class ReportEntry:
    segment_id: str
    features: FeatureVector
    probability: float
    decision: str
    low_confidence: bool


@dataclass(frozen=True)
class AnomalyReport:
    query_scene_id: str
    reference_scene_id: str
    created_at: str
    working_scale: float
    threshold: float
    entries: tuple[ReportEntry, ...]

    def to_document(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "query_scene_id": self.query_scene_id,
            "reference_scene_id": self.reference_scene_id,
            "created_at": self.created_at,
            "working_scale": self.working_scale,
            "threshold": self.threshold,
            "entries": [
                {
                    "segment_id": e.segment_id,
                    "features": {
                        "cosine": e.features.cosine,
                        "disparity": e.features.disparity,
                        "area_diff": e.features.area_diff,
                        "low_confidence": e.features.low_confidence,
                    },
                    "probability": e.probability,
                    "decision": e.decision,
                    "low_confidence": e.low_confidence,
                }
                for e in self.entries
            ],
        }


def parse_report(doc: dict, source: str = "<report>") -> AnomalyReport:
    if not isinstance(doc, dict) or doc.get("schema") != REPORT_SCHEMA:
        raise ReportSchemaError(f"{source}: expected schema {REPORT_SCHEMA!r}")
    try:
        entries = tuple(
            ReportEntry(
                segment_id=e["segment_id"],
                features=FeatureVector(
                    cosine=e["features"]["cosine"],
                    disparity=e["features"]["disparity"],
                    area_diff=e["features"]["area_diff"],
                    low_confidence=bool(e["features"]["low_confidence"]),
                ),
                probability=float(e["probability"]),
                decision=e["decision"],
                low_confidence=bool(e["low_confidence"]),
            )
            for e in doc["entries"]
        )
        return AnomalyReport(
            query_scene_id=doc["query_scene_id"],
            reference_scene_id=doc["reference_scene_id"],
            created_at=doc["created_at"],
            working_scale=float(doc["working_scale"]),
            threshold=float(doc["threshold"]),
            entries=entries,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportSchemaError(f"{source}: malformed report: {exc}") from exc


@dataclass(frozen=True)
class TrainingRow:
    features: FeatureVector
    label: int
    scene_id: str
    segment_id: str


@dataclass
class TrainingSet:
    rows: list[TrainingRow] = field(default_factory=list)

    def to_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.array([r.features.as_array() for r in self.rows]) if self.rows else np.zeros((0, 3))
        y = np.array([r.label for r in self.rows], dtype=np.int64)
        return x, y

    def __len__(self) -> int:
        return len(self.rows)


def load_scene_image(ws: Workspace, scene: Scene) -> RgbImage:
    with Image.open(ws.path(scene.image_path)) as img:
        return RgbImage(np.asarray(img.convert("RGB")))


def working_gray(ws: Workspace, scene: Scene) -> tuple[GrayImage, float]:
    return fit_working_resolution(to_grayscale(load_scene_image(ws, scene)))


def scene_context(ws: Workspace, scene: Scene, gray: GrayImage) -> SceneContext:
    manifest = ws.manifest_path(scene.id)
    return SceneContext(
        scene_id=scene.id,
        gray=gray,
        manifest_path=manifest if os.path.exists(manifest) else None,
        image_path=ws.path(scene.image_path),
    )


@dataclass
class RegisteredPair:
    """Registration products shared by feature extraction and detection."""

    query: Scene
    reference: Scene
    query_gray: GrayImage
    reference_gray: GrayImage
    flow: FlowField
    working_scale: float
    query_ctx: SceneContext
    reference_ctx: SceneContext


def register_pair(ws: Workspace, reference: Scene, query: Scene,
                  params: FlowParams = DEFAULT_FLOW_PARAMS) -> RegisteredPair:
    query_gray, scale_q = working_gray(ws, query)
    reference_gray, _ = working_gray(ws, reference)
    flow = estimate_flow(query_gray, reference_gray, params)
    return RegisteredPair(
        query=query,
        reference=reference,
        query_gray=query_gray,
        reference_gray=reference_gray,
        flow=flow,
        working_scale=scale_q,
        query_ctx=scene_context(ws, query, query_gray),
        reference_ctx=scene_context(ws, reference, reference_gray),
    )


def query_segments(pair: RegisteredPair, backend) -> list[SegmentMask]:
    """Segments of the query scene: its manifest when present, else the backend."""
    if pair.query_ctx.manifest_path:
        return load_manifest(pair.query_ctx.manifest_path)
    return backend.segment_all(pair.query_ctx)


def pair_features(pair: RegisteredPair, backend,
                  masks: list[SegmentMask] | None = None) -> list[tuple[SegmentMask, FeatureVector]]:
    if masks is None:
        masks = query_segments(pair, backend)
    out = []
    for mask in masks:
        fv = extract_features(pair.query_gray, pair.reference_gray, mask,
                              pair.flow, backend, pair.reference_ctx)
        out.append((mask, fv))
    return out


def detect_registered(pair: RegisteredPair, backend, model: classifier.GbdtModel,
                      threshold: float = 0.5,
                      masks: list[SegmentMask] | None = None) -> AnomalyReport:
    entries = []
    for mask, fv in pair_features(pair, backend, masks):
        prob = classifier.predict_proba(model, fv.as_array())
        entries.append(ReportEntry(
            segment_id=mask.id,
            features=fv,
            probability=prob,
            decision="anomaly" if prob >= threshold else "normal",
            low_confidence=fv.low_confidence,
        ))
    return AnomalyReport(
        query_scene_id=pair.query.id,
        reference_scene_id=pair.reference.id,
        created_at=pair.query.captured_at,
        working_scale=pair.working_scale,
        threshold=threshold,
        entries=tuple(entries),
    )


def detect(ws: Workspace, reference: Scene, query: Scene, backend,
           model: classifier.GbdtModel, threshold: float = 0.5,
           params: FlowParams = DEFAULT_FLOW_PARAMS) -> AnomalyReport:
    """Classify every query segment of a registered pair.

    Deterministic: the report timestamp is the query capture time, so
    identical inputs produce byte-identical report JSON.
    """
    pair = register_pair(ws, reference, query, params)
    return detect_registered(pair, backend, model, threshold)


def save_report(path: str, report: AnomalyReport) -> None:
    write_json_atomic(path, report.to_document())


def load_report(path: str) -> AnomalyReport:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReportSchemaError(f"{path}: invalid JSON: {exc}") from exc
    return parse_report(doc, source=path)


def build_training_set(ws: Workspace, labeled_pairs: list[tuple[Scene, Scene, list[LabelRecord]]],
                       backend, params: FlowParams = DEFAULT_FLOW_PARAMS) -> TrainingSet:
    """One row per labeled segment, features extracted exactly as in detect."""
    rows: list[TrainingRow] = []
    for reference, query, records in labeled_pairs:
        manifest_path = ws.manifest_path(query.id)
        if not os.path.exists(manifest_path):
            raise MissingManifest(f"scene {query.id!r} has no manifest; run segment first")
        masks = {m.id: m for m in load_manifest(manifest_path)}
        for rec in records:
            if rec.segment_id not in masks:
                raise DanglingLabel(
                    f"label for unknown segment {rec.segment_id!r} in scene {query.id!r}"
                )
        pair = register_pair(ws, reference, query, params)
        for rec in records:
            fv = extract_features(pair.query_gray, pair.reference_gray,
                                  masks[rec.segment_id], pair.flow, backend,
                                  pair.reference_ctx)
            rows.append(TrainingRow(
                features=fv,
                label=1 if rec.label == "anomaly" else 0,
                scene_id=query.id,
                segment_id=rec.segment_id,
            ))
    return TrainingSet(rows)


def render_overlay(query_img: RgbImage, report: AnomalyReport,
                   masks: list[SegmentMask]) -> RgbImage:
    """Alpha-blend anomaly-decided masks red onto the query image."""
    by_id = {m.id: m for m in masks}
    report_ids = {e.segment_id for e in report.entries}
    extra = sorted(set(by_id) - report_ids)
    missing = sorted(report_ids - set(by_id))
    if extra or missing:
        raise MaskReportMismatch(
            f"masks/report mismatch (masks without entries: {extra}, entries without masks: {missing})"
        )
    out = query_img.data.astype(np.float64).copy()
    color = np.array(OVERLAY_COLOR, dtype=np.float64)
    for entry in report.entries:
        if entry.decision != "anomaly":
            continue
        mask = by_id[entry.segment_id]
        if (mask.height, mask.width) != out.shape[:2]:
            scaled = resize_bilinear(mask.decode().astype(np.float64),
                                     out.shape[0], out.shape[1]) >= 0.5
            raster = scaled
        else:
            raster = mask.decode()
        out[raster] = OVERLAY_ALPHA * color + (1.0 - OVERLAY_ALPHA) * out[raster]
    return RgbImage(out.astype(np.uint8))


# --- synthetic benchmark generator -----------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    image_size: int = 256
    n_fixtures: int = 6
    n_inserted: tuple[int, int] = (2, 5)
    shift_px: int = 3
    illumination_scale: tuple[float, float] = (0.9, 1.1)
    noise_sigma: float = 0.01
    n_pairs: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 64 or self.n_pairs < 1 or self.n_fixtures < 0:
            raise ValueError("invalid synthetic config")
        if self.n_inserted[0] < 0 or self.n_inserted[1] < self.n_inserted[0]:
            raise ValueError("n_inserted range invalid")


def _draw_object(canvas: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                 occupied: np.ndarray) -> bool:
    """Stamp one random rectangle or ellipse; returns False if placement failed."""
    size = canvas.shape[0]
    for _ in range(60):
        w = int(rng.integers(14, 40))
        h = int(rng.integers(14, 40))
        x0 = int(rng.integers(16, size - w - 16))
        y0 = int(rng.integers(16, size - h - 16))
        shape_kind = rng.integers(0, 2)
        obj = np.zeros((h, w), dtype=bool)
        if shape_kind == 0:
            obj[:, :] = True
        else:
            yy, xx = np.mgrid[0:h, 0:w]
            cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
            obj = ((xx - cx) / (w / 2.0)) ** 2 + ((yy - cy) / (h / 2.0)) ** 2 <= 1.0
        region = occupied[y0 - 6:y0 + h + 6, x0 - 6:x0 + w + 6]
        if region.any():
            continue
        intensity = float(rng.uniform(0.55, 0.95))
        # gentle internal shading keeps objects from being perfectly flat
        shade = rng.uniform(-0.03, 0.03)
        yy, xx = np.mgrid[0:h, 0:w]
        patch = intensity + shade * (xx - w / 2.0) / max(w, 1)
        view = canvas[y0:y0 + h, x0:x0 + w]
        view[obj] = np.clip(patch[obj], 0.0, 1.0)
        mask[y0:y0 + h, x0:x0 + w] |= obj
        occupied[y0:y0 + h, x0:x0 + w] |= obj
        return True
    return False


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    from scipy import ndimage as ndi

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = 0.15 + 0.18 * (xx + yy) / (2.0 * (size - 1))
    texture = ndi.gaussian_filter(rng.standard_normal((size, size)), 1.2)
    texture *= 0.04 / max(texture.std(), 1e-9)
    return np.clip(base + texture, 0.0, 1.0)


def _to_rgb_png(path: str, gray: np.ndarray) -> None:
    u8 = np.clip(np.round(gray * 255.0), 0, 255).astype(np.uint8)
    rgb = np.stack([u8, u8, u8], axis=2)
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def synth_generate(cfg: SynthConfig, out_dir: str) -> Workspace:
    """Generate a fully seeded synthetic benchmark workspace.

    Each pair: a reference scene (textured gradient + fixtures) and a query
    scene derived from it by an integer shift, a global illumination factor,
    additive noise, and freshly inserted objects. Manifests and ground-truth
    labels come from the construction itself.
    """
    rng = np.random.default_rng(cfg.seed)
    ws = Workspace(root=out_dir, backend_config={"kind": "builtin", "min_area": 32})
    for sub in SUBDIRS:
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    size = cfg.image_size
    for pair_idx in range(cfg.n_pairs):
        ref_id = f"ref{pair_idx:02d}"
        qry_id = f"qry{pair_idx:02d}"

        content = _background(size, rng)
        occupied = np.zeros((size, size), dtype=bool)
        fixture_masks: list[np.ndarray] = []
        for _ in range(cfg.n_fixtures):
            m = np.zeros((size, size), dtype=bool)
            if _draw_object(content, m, rng, occupied):
                fixture_masks.append(m)

        # query content: same scene shifted, then illumination/noise/insertions
        sx = int(rng.integers(-cfg.shift_px, cfg.shift_px + 1))
        sy = int(rng.integers(-cfg.shift_px, cfg.shift_px + 1))
        query = np.roll(np.roll(content, sx, axis=1), sy, axis=0)
        shifted_fixtures = [np.roll(np.roll(m, sx, axis=1), sy, axis=0) for m in fixture_masks]
        occupied_q = np.zeros((size, size), dtype=bool)
        for m in shifted_fixtures:
            occupied_q |= m

        n_ins = int(rng.integers(cfg.n_inserted[0], cfg.n_inserted[1] + 1))
        inserted_masks: list[np.ndarray] = []
        for _ in range(n_ins):
            m = np.zeros((size, size), dtype=bool)
            if _draw_object(query, m, rng, occupied_q):
                inserted_masks.append(m)

        illum = float(rng.uniform(*cfg.illumination_scale))
        query = np.clip(query * illum + rng.normal(0.0, cfg.noise_sigma, query.shape), 0.0, 1.0)

        ref_rel = os.path.join("scenes", f"{ref_id}.png")
        qry_rel = os.path.join("scenes", f"{qry_id}.png")
        _to_rgb_png(os.path.join(out_dir, ref_rel), content)
        _to_rgb_png(os.path.join(out_dir, qry_rel), query)

        stamp = f"2026-01-01T00:{pair_idx:02d}:00Z"
        ws.scenes[ref_id] = Scene(id=ref_id, image_path=ref_rel, captured_at=stamp, role="reference")
        ws.scenes[qry_id] = Scene(id=qry_id, image_path=qry_rel,
                                  captured_at=f"2026-01-02T00:{pair_idx:02d}:00Z", role="query")
        ws.pairs.append(ScenePair(id=f"p{pair_idx:02d}", reference=ref_id, query=qry_id))

        ref_masks = [SegmentMask.from_raster(f"s{i}", m) for i, m in enumerate(fixture_masks)]
        qry_rasters = shifted_fixtures + inserted_masks
        qry_masks = [SegmentMask.from_raster(f"s{i}", m) for i, m in enumerate(qry_rasters)]
        save_manifest(ws.manifest_path(ref_id), ref_rel, size, size, ref_masks)
        save_manifest(ws.manifest_path(qry_id), qry_rel, size, size, qry_masks)

        records = []
        for i, mask in enumerate(qry_masks):
            label = "normal" if i < len(shifted_fixtures) else "anomaly"
            records.append(LabelRecord(
                scene_id=qry_id, reference_id=ref_id, segment_id=mask.id,
                label=label, labeled_by="synth", labeled_at=stamp,
            ))
        save_labels(ws.labels_path(qry_id), qry_id, ref_id, records)

    ws.save()
    return ws
