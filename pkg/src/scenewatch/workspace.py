"""File-based workspace: scene registry, pair definitions, and JSON stores.

Layout under the workspace root:

    workspace.json   scene registry, pair definitions, backend config
    scenes/          captured images (PNG)
    manifests/       one mask manifest per scene
    labels/          one labels file per query scene
    models/          trained classifier files
    reports/         one anomaly report per pair

All writes are atomic full-file replacements (temp file + rename), which
makes last-write-wins label updates safe under the single server process.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .core import LabelRecord, Scene
from .errors import LabelSchemaError, UnknownScene, WorkspaceError

WORKSPACE_SCHEMA = "scenewatch-workspace/1"
LABELS_SCHEMA = "scenewatch-labels/1"

SUBDIRS = ("scenes", "manifests", "labels", "models", "reports")


@dataclass(frozen=True)
class ScenePair:
    id: str
    reference: str
    query: str


@dataclass
class Workspace:
    root: str
    scenes: dict[str, Scene] = field(default_factory=dict)
    pairs: list[ScenePair] = field(default_factory=list)
    backend_config: dict = field(default_factory=lambda: {"kind": "builtin"})

    # --- paths -----------------------------------------------------------

    def path(self, *parts: str) -> str:
        return os.path.join(self.root, *parts)

    def scene_image_path(self, scene_id: str) -> str:
        return self.path(self.scene(scene_id).image_path)

    def manifest_path(self, scene_id: str) -> str:
        return self.path("manifests", f"{scene_id}.json")

    def labels_path(self, scene_id: str) -> str:
        return self.path("labels", f"{scene_id}.json")

    def report_path(self, pair_id: str) -> str:
        return self.path("reports", f"{pair_id}.json")

    def model_path(self, name: str = "model.json") -> str:
        return self.path("models", name)

    # --- registry --------------------------------------------------------

    def scene(self, scene_id: str) -> Scene:
        if scene_id not in self.scenes:
            raise UnknownScene(f"scene {scene_id!r} not in workspace registry")
        return self.scenes[scene_id]

    def pair(self, pair_id: str) -> ScenePair:
        for p in self.pairs:
            if p.id == pair_id:
                return p
        raise WorkspaceError(f"pair {pair_id!r} not in workspace registry")

    def pair_for(self, reference_id: str, query_id: str) -> ScenePair:
        for p in self.pairs:
            if p.reference == reference_id and p.query == query_id:
                return p
        return ScenePair(id=f"{reference_id}__{query_id}", reference=reference_id, query=query_id)

    def save(self) -> None:
        doc = {
            "schema": WORKSPACE_SCHEMA,
            "backend": self.backend_config,
            "scenes": [
                {
                    "id": s.id,
                    "image": s.image_path,
                    "captured_at": s.captured_at,
                    "role": s.role,
                }
                for s in self.scenes.values()
            ],
            "pairs": [
                {"id": p.id, "reference": p.reference, "query": p.query}
                for p in self.pairs
            ],
        }
        for sub in SUBDIRS:
            os.makedirs(self.path(sub), exist_ok=True)
        write_json_atomic(self.path("workspace.json"), doc)


def write_json_atomic(path: str, doc: dict) -> None:
    blob = json.dumps(doc, indent=2) + "\n"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_workspace(root: str) -> Workspace:
    ws_path = os.path.join(root, "workspace.json")
    if not os.path.exists(ws_path):
        raise WorkspaceError(f"{root}: no workspace.json found")
    with open(ws_path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WorkspaceError(f"{ws_path}: invalid JSON: {exc}") from exc
    if doc.get("schema") != WORKSPACE_SCHEMA:
        raise WorkspaceError(f"{ws_path}: schema: expected {WORKSPACE_SCHEMA!r}")

    ws = Workspace(root=root, backend_config=doc.get("backend", {"kind": "builtin"}))
    for entry in doc.get("scenes", []):
        try:
            scene = Scene(
                id=entry["id"],
                image_path=entry["image"],
                captured_at=entry.get("captured_at", ""),
                role=entry.get("role", "query"),
            )
        except (KeyError, ValueError) as exc:
            raise WorkspaceError(f"{ws_path}: bad scene entry {entry!r}: {exc}") from exc
        if scene.id in ws.scenes:
            raise WorkspaceError(f"{ws_path}: duplicate scene id {scene.id!r}")
        if not os.path.exists(os.path.join(root, scene.image_path)):
            raise WorkspaceError(f"{ws_path}: scene {scene.id!r} image missing: {scene.image_path}")
        ws.scenes[scene.id] = scene
    for entry in doc.get("pairs", []):
        pair = ScenePair(id=entry["id"], reference=entry["reference"], query=entry["query"])
        for sid in (pair.reference, pair.query):
            if sid not in ws.scenes:
                raise WorkspaceError(f"{ws_path}: pair {pair.id!r} references unknown scene {sid!r}")
        ws.pairs.append(pair)
    return ws


# --- labels files ---------------------------------------------------------

def labels_document(scene_id: str, reference_id: str, records: list[LabelRecord]) -> dict:
    labels = []
    for rec in records:
        entry: dict = {"segment_id": rec.segment_id, "label": rec.label}
        if rec.labeled_by:
            entry["labeled_by"] = rec.labeled_by
        if rec.labeled_at:
            entry["labeled_at"] = rec.labeled_at
        labels.append(entry)
    return {
        "schema": LABELS_SCHEMA,
        "scene_id": scene_id,
        "reference_id": reference_id,
        "labels": labels,
    }


def parse_labels(doc: dict, source: str = "<labels>") -> tuple[str, str, list[LabelRecord]]:
    def fail(field_name: str, message: str):
        raise LabelSchemaError(f"{source}: {field_name}: {message}")

    if not isinstance(doc, dict):
        fail("$", "labels document must be a JSON object")
    if doc.get("schema") != LABELS_SCHEMA:
        fail("schema", f"expected {LABELS_SCHEMA!r}, got {doc.get('schema')!r}")
    scene_id = doc.get("scene_id")
    reference_id = doc.get("reference_id")
    if not isinstance(scene_id, str) or not scene_id:
        fail("scene_id", "must be a non-empty string")
    if not isinstance(reference_id, str) or not reference_id:
        fail("reference_id", "must be a non-empty string")
    entries = doc.get("labels")
    if not isinstance(entries, list):
        fail("labels", "must be a list")
    records = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        where = f"labels[{i}]"
        if not isinstance(entry, dict):
            fail(where, "must be an object")
        seg = entry.get("segment_id")
        if not isinstance(seg, str) or not seg:
            fail(f"{where}.segment_id", "must be a non-empty string")
        label = entry.get("label")
        if label not in ("anomaly", "normal"):
            fail(f"{where}.label", f"must be 'anomaly' or 'normal', got {label!r}")
        if seg in seen:
            fail(f"{where}.segment_id", f"duplicate label for segment {seg!r}")
        seen.add(seg)
        records.append(LabelRecord(
            scene_id=scene_id,
            reference_id=reference_id,
            segment_id=seg,
            label=label,
            labeled_by=str(entry.get("labeled_by", "") or ""),
            labeled_at=str(entry.get("labeled_at", "") or ""),
        ))
    return scene_id, reference_id, records


def load_labels(path: str) -> tuple[str, str, list[LabelRecord]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LabelSchemaError(f"{path}: invalid JSON: {exc}") from exc
    return parse_labels(doc, source=path)


def save_labels(path: str, scene_id: str, reference_id: str,
                records: list[LabelRecord]) -> None:
    write_json_atomic(path, labels_document(scene_id, reference_id, records))


def merge_labels(existing: list[LabelRecord], incoming: list[LabelRecord]) -> list[LabelRecord]:
    """Last-write-wins per segment id; ordering follows first appearance."""
    by_segment: dict[str, LabelRecord] = {}
    for rec in list(existing) + list(incoming):
        by_segment[rec.segment_id] = rec
    return list(by_segment.values())
