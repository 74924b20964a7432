import numpy as np
import pytest
from scipy import ndimage

from scenewatch import classifier
from scenewatch.core import GrayImage
from scenewatch.pipeline import SynthConfig, build_training_set, synth_generate
from scenewatch.segmentation import make_backend
from scenewatch.workspace import load_labels


def textured_image(seed: int, h: int = 64, w: int = 64) -> np.ndarray:
    """Smoothed-noise texture in [0.2, 0.8]; wrap mode keeps rolls consistent."""
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random((h, w)), 1.5, mode="wrap")
    img = (img - img.min()) / (img.max() - img.min())
    return 0.2 + 0.6 * img


def shifted_pair(seed: int, sx: int, sy: int, h: int = 64, w: int = 64):
    """(query, reference) with reference = query content translated by (sx, sy)."""
    q = textured_image(seed, h, w)
    r = np.roll(np.roll(q, sx, axis=1), sy, axis=0)
    return GrayImage(q), GrayImage(r)


def labeled_pairs_of(ws):
    out = []
    for p in ws.pairs:
        scene_id, reference_id, records = load_labels(ws.labels_path(p.query))
        out.append((ws.scene(reference_id), ws.scene(scene_id), records))
    return out


@pytest.fixture(scope="session")
def small_ws(tmp_path_factory):
    """Compact synthetic workspace shared by pipeline/CLI/server tests."""
    root = tmp_path_factory.mktemp("small-ws")
    cfg = SynthConfig(image_size=128, n_fixtures=4, n_inserted=(1, 3),
                      n_pairs=3, seed=7)
    return synth_generate(cfg, str(root))


@pytest.fixture(scope="session")
def small_model(small_ws):
    """Classifier trained on the small workspace's own labels."""
    backend = make_backend(small_ws.backend_config)
    training = build_training_set(small_ws, labeled_pairs_of(small_ws), backend)
    x, y = training.to_matrices()
    model = classifier.train(x, y, classifier.GbdtHyperparams(seed=3))
    path = small_ws.model_path("model.json")
    classifier.save_model(model, path)
    return model
