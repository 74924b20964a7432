"""Command-line entry point.

Exit codes: 0 success, 1 domain error, 2 usage error. Domain errors emit a
single machine-readable stderr line: ``error: <code>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from PIL import Image

from . import classifier, pipeline, vlm
from .errors import EmptyDataset, SceneWatchError
from .features import FEATURE_CSV_HEADER, write_feature_csv
from .pipeline import SynthConfig
from .registration import save_flow
from .segmentation import make_backend, save_manifest
from .workspace import Workspace, load_labels, load_workspace

WORKSPACE_ENV = "SCENEWATCH_WORKSPACE"
VLM_KEY_ENV = "SCENEWATCH_VLM_KEY"


def _workspace_from(args) -> Workspace:
    root = args.workspace or os.environ.get(WORKSPACE_ENV)
    if not root:
        raise SceneWatchError(
            f"no workspace given; use --workspace or set {WORKSPACE_ENV}")
    return load_workspace(root)


def _backend_for(ws: Workspace, args) -> object:
    config = dict(ws.backend_config)
    override = getattr(args, "backend", None)
    if override:
        config = {"kind": override}
        if override == "sidecar":
            if not getattr(args, "sidecar_cmd", None):
                raise SceneWatchError("sidecar backend needs --sidecar-cmd")
            config["cmd"] = args.sidecar_cmd
    elif config.get("kind") == "sidecar" and getattr(args, "sidecar_cmd", None):
        config["cmd"] = args.sidecar_cmd
    return make_backend(config)


def _print_json(doc: dict, out_path: str | None) -> None:
    blob = json.dumps(doc, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(blob)
    else:
        sys.stdout.write(blob)


# --- commands ---------------------------------------------------------------

def cmd_segment(args) -> int:
    ws = _workspace_from(args)
    scene = ws.scene(args.scene)
    backend = _backend_for(ws, args)
    gray, _ = pipeline.working_gray(ws, scene)
    ctx = pipeline.scene_context(ws, scene, gray)
    masks = backend.segment_all(ctx)
    out_path = ws.manifest_path(scene.id)
    save_manifest(out_path, scene.image_path, gray.width, gray.height, masks)
    print(f"{out_path}: {len(masks)} segments")
    return 0


def cmd_features(args) -> int:
    ws = _workspace_from(args)
    reference = ws.scene(args.reference)
    query = ws.scene(args.query)
    backend = _backend_for(ws, args)
    pair = pipeline.register_pair(ws, reference, query)
    if args.dump_flow:
        save_flow(args.dump_flow, pair.flow)

    labels = {}
    labels_path = ws.labels_path(query.id)
    if os.path.exists(labels_path):
        _, _, records = load_labels(labels_path)
        labels = {r.segment_id: r.label for r in records}

    rows = []
    for mask, fv in pipeline.pair_features(pair, backend):
        rows.append({
            "scene_id": query.id,
            "segment_id": mask.id,
            "cosine": fv.cosine,
            "disparity": fv.disparity,
            "area_diff": fv.area_diff,
            "low_confidence": fv.low_confidence,
            "label": labels.get(mask.id, ""),
        })
    if args.out:
        write_feature_csv(args.out, rows)
    else:
        sys.stdout.write(",".join(FEATURE_CSV_HEADER) + "\n")
        for r in rows:
            sys.stdout.write(
                f"{r['scene_id']},{r['segment_id']},{r['cosine']:.9g},"
                f"{r['disparity']:.9g},{r['area_diff']:.9g},"
                f"{'true' if r['low_confidence'] else 'false'},{r['label']}\n")
    return 0


def _training_matrices(ws: Workspace, label_files: list[str], backend):
    labeled_pairs = []
    for path in label_files:
        scene_id, reference_id, records = load_labels(path)
        labeled_pairs.append((ws.scene(reference_id), ws.scene(scene_id), records))
    training = pipeline.build_training_set(ws, labeled_pairs, backend)
    if len(training) == 0:
        raise EmptyDataset("no labeled segments in the given labels files")
    return training.to_matrices()


def cmd_train(args) -> int:
    ws = _workspace_from(args)
    backend = _backend_for(ws, args)
    x, y = _training_matrices(ws, args.labels, backend)
    hp = classifier.GbdtHyperparams(seed=args.seed)
    model = classifier.train(x, y, hp)
    out = args.out or ws.model_path()
    classifier.save_model(model, out)
    print(f"{out}: {len(model.trees)} trees on {x.shape[0]} samples")
    return 0


def cmd_cv(args) -> int:
    ws = _workspace_from(args)
    backend = _backend_for(ws, args)
    x, y = _training_matrices(ws, args.labels, backend)
    hp = classifier.GbdtHyperparams(seed=args.seed)
    report = classifier.cross_validate(x, y, k=args.k, hp=hp, seed=args.seed)
    _print_json(report.to_document(), args.out)
    print(f"mean AUC {report.mean_auc:.4f} +/- {report.std_auc:.4f} over {args.k} folds",
          file=sys.stderr)
    return 0


def cmd_detect(args) -> int:
    ws = _workspace_from(args)
    reference = ws.scene(args.reference)
    query = ws.scene(args.query)
    backend = _backend_for(ws, args)
    model = classifier.load_model(args.model)
    registered = pipeline.register_pair(ws, reference, query)
    masks = pipeline.query_segments(registered, backend)
    report = pipeline.detect_registered(registered, backend, model,
                                        threshold=args.threshold, masks=masks)
    pair = ws.pair_for(reference.id, query.id)
    pipeline.save_report(ws.report_path(pair.id), report)
    if args.overlay:
        img = pipeline.load_scene_image(ws, query)
        overlay = pipeline.render_overlay(img, report, masks)
        Image.fromarray(overlay.data, mode="RGB").save(args.overlay, format="PNG")
    _print_json(report.to_document(), args.out)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        image_size=args.size,
        n_fixtures=args.fixtures,
        n_inserted=(args.min_inserted, args.max_inserted),
        shift_px=args.shift,
        noise_sigma=args.noise,
        n_pairs=args.pairs,
        seed=args.seed,
    )
    ws = pipeline.synth_generate(cfg, args.out)
    n_labels = sum(
        len(load_labels(ws.labels_path(p.query))[2]) for p in ws.pairs)
    print(f"{args.out}: {len(ws.pairs)} pairs, {n_labels} labeled segments")
    return 0


def cmd_assess(args) -> int:
    ws = _workspace_from(args)
    scene = ws.scene(args.scene)
    config = vlm.EndpointConfig(
        url=args.endpoint,
        model=args.model,
        api_key_env=VLM_KEY_ENV,
        timeout_ms=args.timeout_ms,
        max_tokens=args.max_tokens,
    )
    record = vlm.assess(ws.path(scene.image_path), args.template, config,
                        scene_id=scene.id)
    _print_json(record.to_document(), args.out)
    return 0


def cmd_serve(args) -> int:
    from .server import make_server

    ws = _workspace_from(args)
    ui_dir = args.ui_dir
    if ui_dir is None:
        candidate = os.path.join(os.getcwd(), "frontend", "dist")
        ui_dir = candidate if os.path.isdir(candidate) else None
    server = make_server(ws, host=args.host, port=args.port, ui_dir=ui_dir)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenewatch",
        description="Scene-change anomaly detection over registered photo pairs.",
    )
    parser.add_argument("--workspace", help=f"workspace root (default: ${WORKSPACE_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment a scene and write its mask manifest")
    p.add_argument("scene")
    p.add_argument("--backend", choices=["builtin", "manifest", "sidecar"])
    p.add_argument("--sidecar-cmd", nargs=argparse.REMAINDER,
                   help="sidecar command; everything after this flag")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="export per-segment features as CSV")
    p.add_argument("reference")
    p.add_argument("query")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--dump-flow", help="write the flow field as a binary dump")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the anomaly classifier from labels files")
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--out", help="model path (default: <workspace>/models/model.json)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CV report path (default: stdout)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("detect", help="classify query segments against a reference scene")
    p.add_argument("reference")
    p.add_argument("query")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--overlay", help="write a red-overlay PNG")
    p.add_argument("--out", help="report path (also saved under <workspace>/reports)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="generate a synthetic benchmark workspace")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=16)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--fixtures", type=int, default=6)
    p.add_argument("--min-inserted", type=int, default=2)
    p.add_argument("--max-inserted", type=int, default=5)
    p.add_argument("--shift", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.01)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("assess", help="ask the multimodal endpoint about a scene")
    p.add_argument("scene")
    p.add_argument("--template", choices=sorted(vlm.TEMPLATES), required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model", default="local-mslm")
    p.add_argument("--max-tokens", type=int, default=vlm.DEFAULT_MAX_NEW_TOKENS)
    p.add_argument("--timeout-ms", type=int, default=60000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("serve", help="serve the HTTP API and labeling UI")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", help="directory with built UI assets")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SceneWatchError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
