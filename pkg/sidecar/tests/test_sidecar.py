import json
import os
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from sam_sidecar.cli import main
from sam_sidecar.masks import encode_rle, mask_entry


def write_fixture(path, squares):
    data = np.full((64, 64), 30, dtype=np.uint8)
    for (x0, y0, side, value) in squares:
        data[y0:y0 + side, x0:x0 + side] = value
    Image.fromarray(np.stack([data] * 3, axis=2)).save(path)
    return path


@pytest.fixture()
def two_object_png(tmp_path):
    return write_fixture(str(tmp_path / "scene.png"),
                         [(8, 8, 10, 220), (40, 36, 12, 200)])


def decode(runs, width, height):
    flat = []
    value = 0
    for run in runs:
        flat.extend([value] * run)
        value = 1 - value
    return np.array(flat, dtype=bool).reshape(height, width)


class TestAutoMode:
    def test_manifest_written_with_expected_objects(self, two_object_png, tmp_path):
        out = str(tmp_path / "manifest.json")
        assert main(["--image", two_object_png, "--out", out]) == 0
        doc = json.load(open(out))
        assert doc["schema"] == "scenewatch-manifest/1"
        assert doc["width"] == 64 and doc["height"] == 64
        areas = sorted(s["area"] for s in doc["segments"])
        assert areas == [100, 144]
        for seg in doc["segments"]:
            assert sum(seg["rle"]) == 64 * 64
            raster = decode(seg["rle"], 64, 64)
            assert int(raster.sum()) == seg["area"]

    def test_min_area_filter(self, tmp_path):
        png = write_fixture(str(tmp_path / "speck.png"),
                            [(8, 8, 3, 220), (30, 30, 10, 220)])
        out = str(tmp_path / "manifest.json")
        assert main(["--image", png, "--out", out, "--min-area", "32"]) == 0
        doc = json.load(open(out))
        assert [s["area"] for s in doc["segments"]] == [100]

    def test_background_sized_mask_dropped(self, tmp_path):
        data = np.full((64, 64), 200, dtype=np.uint8)
        data[10:20, 10:20] = 30  # bright background, dark hole
        png = str(tmp_path / "inverted.png")
        Image.fromarray(np.stack([data] * 3, axis=2)).save(png)
        out = str(tmp_path / "manifest.json")
        assert main(["--image", png, "--out", out]) == 0
        doc = json.load(open(out))
        assert doc["segments"] == []  # the only component covers >90% of the scene

    def test_deterministic_output(self, two_object_png, tmp_path):
        out1 = str(tmp_path / "m1.json")
        out2 = str(tmp_path / "m2.json")
        assert main(["--image", two_object_png, "--out", out1]) == 0
        assert main(["--image", two_object_png, "--out", out2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()


class TestPointsMode:
    def test_mask_contains_prompt_point(self, two_object_png, tmp_path):
        pts = str(tmp_path / "points.json")
        json.dump([[12, 12]], open(pts, "w"))
        out = str(tmp_path / "manifest.json")
        assert main(["--image", two_object_png, "--out", out, "--points", pts]) == 0
        doc = json.load(open(out))
        assert len(doc["segments"]) == 1
        raster = decode(doc["segments"][0]["rle"], 64, 64)
        assert raster[12, 12]

    def test_background_point_snaps_to_nearest_object(self, two_object_png, tmp_path):
        pts = str(tmp_path / "points.json")
        json.dump([[20, 10]], open(pts, "w"))  # just right of the first square
        out = str(tmp_path / "manifest.json")
        assert main(["--image", two_object_png, "--out", out, "--points", pts]) == 0
        doc = json.load(open(out))
        assert len(doc["segments"]) == 1
        assert doc["segments"][0]["bbox"][:2] == [8, 8]

    def test_one_mask_per_point(self, two_object_png, tmp_path):
        pts = str(tmp_path / "points.json")
        json.dump([[12, 12], [45, 40]], open(pts, "w"))
        out = str(tmp_path / "manifest.json")
        assert main(["--image", two_object_png, "--out", out, "--points", pts]) == 0
        doc = json.load(open(out))
        assert len(doc["segments"]) == 2

    def test_bad_points_file(self, two_object_png, tmp_path, capsys):
        pts = str(tmp_path / "points.json")
        json.dump({"x": 1}, open(pts, "w"))
        out = str(tmp_path / "manifest.json")
        assert main(["--image", two_object_png, "--out", out, "--points", pts]) == 1
        assert not os.path.exists(out)
        assert "points file" in capsys.readouterr().err


class TestFailureModes:
    def test_missing_checkpoint_fails_without_partial_file(self, two_object_png, tmp_path, capsys):
        out = str(tmp_path / "manifest.json")
        code = main(["--image", two_object_png, "--out", out,
                     "--checkpoint", str(tmp_path / "absent.pth")])
        assert code != 0
        assert not os.path.exists(out)
        assert not os.path.exists(out + ".tmp")
        assert "checkpoint" in capsys.readouterr().err

    def test_missing_image_fails(self, tmp_path, capsys):
        out = str(tmp_path / "manifest.json")
        assert main(["--image", str(tmp_path / "nope.png"), "--out", out]) == 1
        assert not os.path.exists(out)

    def test_cli_process_contract(self, two_object_png, tmp_path):
        out = str(tmp_path / "manifest.json")
        proc = subprocess.run(
            [sys.executable, "-m", "sam_sidecar",
             "--image", two_object_png, "--out", out],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert os.path.exists(out)


class TestMaskHelpers:
    def test_rle_starts_with_zero_run(self):
        raster = np.zeros((2, 3), dtype=bool)
        raster[0, 0] = True
        assert encode_rle(raster) == [0, 1, 5]

    def test_entry_fields_derived_from_raster(self):
        raster = np.zeros((8, 8), dtype=bool)
        raster[2:5, 3:7] = True
        entry = mask_entry("s0", raster)
        assert entry["bbox"] == [3, 2, 4, 3]
        assert entry["area"] == 12
        assert entry["center"] == [4.5, 3.0]
