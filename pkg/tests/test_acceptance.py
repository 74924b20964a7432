"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; any assertion failure keeps the line from printing.
"""

import hashlib
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import labeled_pairs_of, shifted_pair
from oracles import brute_force_auc, logistic_loss
from scenewatch import classifier
from scenewatch.cli import main
from scenewatch.core import decode_rle, encode_rle
from scenewatch.errors import RunSumMismatch, TransportError
from scenewatch.features import cosine_intensity_distance, procrustes_disparity
from scenewatch.pipeline import build_training_set, detect
from scenewatch.registration import estimate_flow
from scenewatch.segmentation import load_manifest, make_backend
from scenewatch.vlm import EndpointConfig, assess, parse_verdict, render_prompt
from scenewatch.workspace import load_workspace
from vlm_stub import ConnectionDropper, StubVlmServer

BENCHMARK_TIME_BUDGET_S = 300.0


def passline(name: str) -> None:
    print(f"\nACCEPTANCE PASS: {name}")


def rotation(deg):
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


class TestAcceptance:
    def test_synthetic_end_to_end_benchmark(self, tmp_path):
        started = time.monotonic()
        root = str(tmp_path / "bench")
        assert main(["synth", "--seed", "1", "--out", root]) == 0
        ws = load_workspace(root)
        assert len(ws.pairs) >= 10

        pairs = labeled_pairs_of(ws)
        n_labels = sum(len(records) for _, _, records in pairs)
        assert n_labels >= 120

        backend = make_backend(ws.backend_config)  # builtin segmentation
        training = build_training_set(ws, pairs, backend)
        x, y = training.to_matrices()
        hp = classifier.GbdtHyperparams()  # the published classifier settings
        assert (hp.learning_rate, hp.n_trees, hp.max_depth) == (0.1, 100, 3)
        assert (hp.min_child_hessian, hp.gamma) == (1.0, 0.0)
        assert (hp.subsample_rows, hp.subsample_features) == (0.8, 0.8)
        report = classifier.cross_validate(x, y, k=5, hp=hp, seed=1)

        elapsed = time.monotonic() - started
        assert report.mean_auc >= 0.85
        assert elapsed < BENCHMARK_TIME_BUDGET_S
        passline(
            f"synthetic benchmark: {len(ws.pairs)} pairs, {n_labels} segments, "
            f"mean AUC {report.mean_auc:.3f} +/- {report.std_auc:.3f} "
            f"in {elapsed:.1f}s")

    def test_flow_recovery_on_twenty_seeded_shifts(self):
        rng = np.random.default_rng(2026)
        worst = 0.0
        for trial in range(20):
            sx, sy = (int(v) for v in rng.integers(-3, 4, size=2))
            query, reference = shifted_pair(seed=trial, sx=sx, sy=sy)
            flow = estimate_flow(query, reference)
            interior = slice(8, -8)
            epe = float(np.mean(np.hypot(flow.du[interior, interior] - sx,
                                         flow.dv[interior, interior] - sy)))
            assert epe < 0.5, f"trial {trial} shift ({sx},{sy}) epe {epe}"
            worst = max(worst, epe)
        passline(f"flow recovery: 20 shifts, worst interior EPE {worst:.4f} px")

    def test_procrustes_property_suite(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(3, 50))
            a = rng.normal(size=(n, 2))
            m = rotation(rng.uniform(0, 360))
            if rng.random() < 0.5:
                m = m @ np.diag([1.0, -1.0])
            b = rng.uniform(0.1, 10.0) * a @ m.T + rng.normal(size=2) * 20
            assert procrustes_disparity(a, b).value <= 1e-10
        for _ in range(100):
            a = rng.normal(size=(int(rng.integers(3, 30)), 2))
            b = rng.normal(size=a.shape)
            ab = procrustes_disparity(a, b).value
            ba = procrustes_disparity(b, a).value
            assert ab >= 0.0 and ba >= 0.0
            assert abs(ab - ba) <= 1e-10
        passline("procrustes: similarity invariance @1e-10, symmetry, nonnegativity")

    def test_cosine_property_suite(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            n = int(rng.integers(1, 80))
            a, b = rng.random(n), rng.random(n)
            base = cosine_intensity_distance(a, b)
            assert 0.0 <= base <= 1.0
            scale = float(rng.uniform(1e-4, 1e4))
            assert abs(cosine_intensity_distance(scale * a, b) - base) <= 1e-12
            assert abs(cosine_intensity_distance(a, scale * b) - base) <= 1e-12
        zero = np.zeros(4)
        some = np.array([0.5, 0.0, 0.25, 0.0])
        assert cosine_intensity_distance(zero, zero) == 0.0
        assert cosine_intensity_distance(zero, some) == 1.0
        assert cosine_intensity_distance(some, zero) == 1.0
        passline("cosine: scale invariance @1e-12, range, zero-norm conventions")

    def test_auc_matches_brute_force_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            decimals = int(rng.integers(0, 3))  # coarse rounding forces ties
            scores = np.round(rng.random(n), decimals)
            fast = classifier.roc_auc(scores, labels)
            slow = brute_force_auc(scores, labels)
            assert abs(fast - slow) <= 1e-12
        passline("roc_auc == O(n^2) pair counting on 100 tied instances @1e-12")

    def test_gbdt_suite(self, tmp_path):
        # non-increasing training loss, subsampling off
        rng = np.random.default_rng(10)
        x = rng.random((60, 3))
        y = (x[:, 0] + rng.normal(scale=0.2, size=60) > 0.5).astype(np.int64)
        y[0], y[1] = 0, 1
        hp = classifier.GbdtHyperparams(subsample_rows=1.0, subsample_features=1.0,
                                        n_trees=50, seed=0)
        model = classifier.train(x, y, hp)
        losses = [
            logistic_loss(classifier._predict_raw(
                model.trees, model.base_logit, hp.learning_rate, x, n_trees=t), y)
            for t in range(hp.n_trees + 1)
        ]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

        # separable 8-point fixture reaches training AUC 1.0
        x8 = np.array([
            [0.1, 0.3, 0.2], [0.2, 0.1, 0.9], [0.3, 0.8, 0.1], [0.4, 0.5, 0.5],
            [0.6, 0.2, 0.4], [0.7, 0.9, 0.8], [0.8, 0.4, 0.0], [0.9, 0.6, 0.3]])
        y8 = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        m8 = classifier.train(x8, y8, hp)
        assert classifier.roc_auc(classifier.predict_proba_many(m8, x8), y8) == 1.0

        # byte-identical files for a fixed seed
        p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        hp7 = classifier.GbdtHyperparams(seed=7)
        classifier.save_model(classifier.train(x, y, hp7), p1)
        classifier.save_model(classifier.train(x, y, hp7), p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

        # save/load prediction parity on 100 random inputs
        loaded = classifier.load_model(p1)
        probe = rng.random((100, 3))
        original = classifier.predict_proba_many(classifier.train(x, y, hp7), probe)
        assert np.array_equal(classifier.predict_proba_many(loaded, probe), original)
        passline("gbdt: monotone loss, separable AUC 1.0, byte-stable files, "
                 "save/load parity")

    def test_rle_codec_round_trip_and_corruption(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            h = int(rng.integers(1, 129))
            w = int(rng.integers(1, 129))
            raster = rng.random((h, w)) < rng.uniform(0.02, 0.98)
            runs = encode_rle(raster)
            assert np.array_equal(decode_rle(runs, w, h), raster)
        with pytest.raises(RunSumMismatch):
            decode_rle([5], 2, 2)
        with pytest.raises(RunSumMismatch):
            decode_rle([1, 2], 2, 2)
        passline("rle codec: 1000 random rasters round-trip, corrupt runs rejected")

    def test_prompt_templates_frozen(self):
        organization = (
            "A chat between a curious user and an extremely picky inspector for "
            "the R&D lab. The inspector gives detailed answers to the user's "
            "questions. USER: <image>\\ Is the lab organized or disorganized?: "
            "ASSISTANT:")
        floor = (
            "A chat between a curious user and an extremely picky inspector for "
            "the R&D lab. There should be no objects on the floor.The inspector "
            "gives detailed answers to the user's questions. USER: <image>\\ "
            "What is on the floor?: ASSISTANT:")
        assert render_prompt("organization") == organization
        assert render_prompt("floor") == floor
        assert hashlib.sha256(render_prompt("organization").encode()).hexdigest() == \
            hashlib.sha256(organization.encode()).hexdigest()

        assert parse_verdict("utterly disorganized and organized at once") == "disorganized"
        rng = np.random.default_rng(12)
        alphabet = np.array(list("abcd ,."))
        for _ in range(100):
            noise = "".join(rng.choice(alphabet, size=10))
            assert parse_verdict(noise + "disorganized" + noise) == "disorganized"
        passline("prompt freeze: both templates byte-equal, precedence holds")

    def test_vlm_contract_against_bundled_stub(self, tmp_path):
        from PIL import Image

        png = str(tmp_path / "scene.png")
        Image.fromarray(np.full((8, 8, 3), 128, dtype=np.uint8)).save(png)

        fig3a = "The lab appears to be organized, as the black desk is clean and ready for use."
        fig3f = ("The lab appears to be disorganized, with various items scattered "
                 "on the table, including test tubes, beakers, and other lab equipment.")
        with StubVlmServer(content=fig3a) as stub:
            record = assess(png, "organization",
                            EndpointConfig(url=stub.url, backoff_s=0.01))
            assert record.verdict == "organized"
            assert record.raw_response == fig3a
        with StubVlmServer(content=fig3f) as stub:
            record = assess(png, "organization",
                            EndpointConfig(url=stub.url, backoff_s=0.01))
            assert record.verdict == "disorganized"

        with ConnectionDropper() as dropper:
            with pytest.raises(TransportError) as err:
                assess(png, "organization",
                       EndpointConfig(url=dropper.url, backoff_s=0.01))
            assert err.value.attempts == 3
            time.sleep(0.05)
            assert dropper.attempts == 3
        passline("vlm contract: stub responses parsed, transport fails after "
                 "exactly 3 attempts")

    def test_detect_report_bytes_deterministic(self, small_ws, small_model):
        backend = make_backend(small_ws.backend_config)
        pair = small_ws.pairs[0]
        reference = small_ws.scene(pair.reference)
        query = small_ws.scene(pair.query)
        blob_a = json.dumps(detect(small_ws, reference, query, backend,
                                   small_model, 0.5).to_document(), indent=2)
        blob_b = json.dumps(detect(small_ws, reference, query, backend,
                                   small_model, 0.5).to_document(), indent=2)
        assert blob_a == blob_b
        passline("determinism: detect report JSON byte-identical across runs")


SIDECAR_SRC = os.path.join(os.path.dirname(__file__), "..", "sidecar", "src")


@pytest.mark.skipif(not os.path.isdir(SIDECAR_SRC),
                    reason="segmentation sidecar package not present")
class TestSecondaryAcceptance:
    def _run_sidecar(self, argv, cwd=None):
        env = dict(os.environ)
        env["PYTHONPATH"] = os.path.abspath(SIDECAR_SRC) + os.pathsep + env.get("PYTHONPATH", "")
        return subprocess.run([sys.executable, "-m", "sam_sidecar", *argv],
                              capture_output=True, text=True, env=env, cwd=cwd)

    def test_sidecar_contract(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(31)
        checked_points = 0
        for i in range(10):
            data = np.full((64, 64), 40, dtype=np.uint8)
            x0, y0 = (int(v) for v in rng.integers(8, 40, size=2))
            data[y0:y0 + 12, x0:x0 + 12] = 220
            png = str(tmp_path / f"fixture{i}.png")
            Image.fromarray(np.stack([data] * 3, axis=2)).save(png)

            auto_out = str(tmp_path / f"auto{i}.json")
            proc = self._run_sidecar(["--image", png, "--out", auto_out])
            assert proc.returncode == 0, proc.stderr
            masks = load_manifest(auto_out)  # primary-side validation
            assert masks

            pts = str(tmp_path / f"pts{i}.json")
            with open(pts, "w") as fh:
                json.dump([[x0 + 6, y0 + 6]], fh)
            pts_out = str(tmp_path / f"pts{i}_out.json")
            proc = self._run_sidecar(["--image", png, "--out", pts_out,
                                      "--points", pts])
            assert proc.returncode == 0, proc.stderr
            prompted = load_manifest(pts_out)
            assert len(prompted) == 1
            assert prompted[0].contains(x0 + 6, y0 + 6)
            checked_points += 1
        assert checked_points == 10
        passline("sidecar contract: manifests validate, point prompts contained "
                 "on 10 fixtures")
