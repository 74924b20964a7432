"""Small HTTP API serving scenes, segments, labels, and reports to the UI.

Files are the store: GETs read workspace JSON straight from disk, label
POSTs merge last-write-wins per segment and replace the file atomically.
A threading lock serializes label writes; everything else is read-only.
"""

from __future__ import annotations

import io
import json
import os
import posixpath
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from PIL import Image

from .errors import LabelSchemaError, SceneWatchError, UnknownScene
from .segmentation import load_manifest
from .workspace import (
    Workspace,
    labels_document,
    load_labels,
    merge_labels,
    parse_labels,
    save_labels,
)

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>scenewatch</title></head>
<body>
<h1>scenewatch API</h1>
<p>The labeling UI bundle was not found. Build it with
<code>cd frontend &amp;&amp; npm install &amp;&amp; npm run build</code>
and restart <code>scenewatch serve</code> with <code>--ui-dir frontend/dist</code>.</p>
<p>API endpoints: <code>/api/scenes</code>, <code>/api/scenes/{id}/image</code>,
<code>/api/scenes/{id}/segments</code>, <code>/api/labels/{scene_id}</code>,
<code>/api/reports/{pair_id}</code>.</p>
</body></html>
"""

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".map": "application/json",
}


class SceneWatchServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], workspace: Workspace,
                 ui_dir: str | None = None):
        super().__init__(address, ApiHandler)
        self.workspace = workspace
        self.ui_dir = ui_dir
        self.label_lock = threading.Lock()


class ApiHandler(BaseHTTPRequestHandler):
    server: SceneWatchServer

    # --- plumbing ---------------------------------------------------------

    def log_message(self, fmt, *args):  # keep pytest output clean
        pass

    def _send(self, status: int, content_type: str, payload: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _send_json(self, status: int, doc: dict) -> None:
        self._send(status, "application/json; charset=utf-8",
                   (json.dumps(doc, indent=2) + "\n").encode("utf-8"))

    def _send_error_json(self, status: int, code: str, message: str) -> None:
        self._send_json(status, {"error": {"code": code, "message": message}})

    # --- routing ----------------------------------------------------------

    def do_GET(self):
        try:
            self._route_get()
        except SceneWatchError as exc:
            self._send_error_json(404 if isinstance(exc, UnknownScene) else 400,
                                  exc.code, str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._send_error_json(500, "InternalError", str(exc))

    def do_POST(self):
        try:
            self._route_post()
        except LabelSchemaError as exc:
            self._send_error_json(400, exc.code, str(exc))
        except UnknownScene as exc:
            self._send_error_json(404, exc.code, str(exc))
        except SceneWatchError as exc:
            self._send_error_json(400, exc.code, str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._send_error_json(500, "InternalError", str(exc))

    def _route_get(self):
        ws = self.server.workspace
        parts = [p for p in self.path.split("?")[0].split("/") if p]

        if parts[:2] == ["api", "scenes"] and len(parts) == 2:
            return self._send_json(200, {
                "schema": "scenewatch-scenes/1",
                "scenes": [
                    {"id": s.id, "image": s.image_path,
                     "captured_at": s.captured_at, "role": s.role}
                    for s in ws.scenes.values()
                ],
                "pairs": [
                    {"id": p.id, "reference": p.reference, "query": p.query,
                     "has_report": os.path.exists(ws.report_path(p.id))}
                    for p in ws.pairs
                ],
            })

        if parts[:2] == ["api", "scenes"] and len(parts) == 4 and parts[3] == "image":
            scene = ws.scene(parts[2])
            path = ws.path(scene.image_path)
            if path.lower().endswith(".png"):
                with open(path, "rb") as fh:
                    return self._send(200, "image/png", fh.read())
            with Image.open(path) as img:
                buf = io.BytesIO()
                img.convert("RGB").save(buf, format="PNG")
            return self._send(200, "image/png", buf.getvalue())

        if parts[:2] == ["api", "scenes"] and len(parts) == 4 and parts[3] == "segments":
            scene = ws.scene(parts[2])
            manifest = ws.manifest_path(scene.id)
            if not os.path.exists(manifest):
                return self._send_error_json(404, "ManifestNotFound",
                                             f"scene {scene.id!r} has no manifest")
            load_manifest(manifest)  # refuse to serve an invalid file
            with open(manifest, "rb") as fh:
                return self._send(200, "application/json; charset=utf-8", fh.read())

        if parts[:2] == ["api", "labels"] and len(parts) == 3:
            scene = ws.scene(parts[2])
            path = ws.labels_path(scene.id)
            if not os.path.exists(path):
                reference_id = next(
                    (p.reference for p in ws.pairs if p.query == scene.id), "")
                return self._send_json(200, labels_document(scene.id, reference_id, []))
            scene_id, reference_id, records = load_labels(path)
            return self._send_json(200, labels_document(scene_id, reference_id, records))

        if parts[:2] == ["api", "reports"] and len(parts) == 3:
            pair = ws.pair(parts[2])
            path = ws.report_path(pair.id)
            if not os.path.exists(path):
                return self._send_error_json(404, "ReportNotFound",
                                             f"pair {pair.id!r} has no report; run detect")
            with open(path, "rb") as fh:
                return self._send(200, "application/json; charset=utf-8", fh.read())

        if not parts or parts[0] != "api":
            return self._serve_static(parts)

        return self._send_error_json(404, "NotFound", f"no route for {self.path}")

    def _route_post(self):
        ws = self.server.workspace
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts[:2] != ["api", "labels"] or len(parts) != 3:
            return self._send_error_json(404, "NotFound", f"no route for {self.path}")

        scene = ws.scene(parts[2])
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise LabelSchemaError(f"body: invalid JSON: {exc}") from exc
        scene_id, reference_id, incoming = parse_labels(doc, source="body")
        if scene_id != scene.id:
            raise LabelSchemaError(
                f"scene_id: body says {scene_id!r} but URL addresses {scene.id!r}")

        manifest_path = ws.manifest_path(scene.id)
        if os.path.exists(manifest_path):
            known = {m.id for m in load_manifest(manifest_path)}
            for rec in incoming:
                if rec.segment_id not in known:
                    raise LabelSchemaError(
                        f"labels: segment {rec.segment_id!r} not in manifest of {scene.id!r}")

        with self.server.label_lock:
            path = ws.labels_path(scene.id)
            existing: list = []
            if os.path.exists(path):
                _, _, existing = load_labels(path)
            merged = merge_labels(existing, incoming)
            save_labels(path, scene.id, reference_id, merged)
        self._send_json(200, {"ok": True, "count": len(merged)})

    def _serve_static(self, parts: list[str]):
        ui_dir = self.server.ui_dir
        if ui_dir is None or not os.path.isdir(ui_dir):
            return self._send(200, "text/html; charset=utf-8",
                              _PLACEHOLDER_PAGE.encode("utf-8"))
        rel = posixpath.normpath("/".join(parts)) if parts else "index.html"
        if rel in (".", ""):
            rel = "index.html"
        if rel.startswith("..") or os.path.isabs(rel):
            return self._send_error_json(404, "NotFound", "bad path")
        path = os.path.join(ui_dir, rel)
        if os.path.isdir(path):
            path = os.path.join(path, "index.html")
        if not os.path.isfile(path):
            # hash-routed SPA: unknown paths fall back to the shell
            path = os.path.join(ui_dir, "index.html")
            if not os.path.isfile(path):
                return self._send_error_json(404, "NotFound", f"no asset {rel}")
        ext = os.path.splitext(path)[1].lower()
        with open(path, "rb") as fh:
            return self._send(200, _CONTENT_TYPES.get(ext, "application/octet-stream"),
                              fh.read())


def make_server(workspace: Workspace, host: str = "127.0.0.1", port: int = 0,
                ui_dir: str | None = None) -> SceneWatchServer:
    return SceneWatchServer((host, port), workspace, ui_dir=ui_dir)
