import json
import math

import numpy as np
import pytest

from oracles import brute_force_auc, logistic_loss
from scenewatch import classifier
from scenewatch.classifier import (
    GbdtHyperparams,
    GbdtModel,
    cross_validate,
    load_model,
    model_file_hash,
    predict_proba,
    predict_proba_many,
    roc_auc,
    roc_points,
    save_model,
    stratified_folds,
    train,
)
from scenewatch.errors import (
    EmptyDataset,
    FoldDegenerate,
    LengthMismatch,
    ModelSchemaError,
    SingleClassDataset,
    TooFewSamples,
)

NO_SUBSAMPLE = GbdtHyperparams(subsample_rows=1.0, subsample_features=1.0,
                               n_trees=20, seed=0)


def separable_eight():
    """Classes split cleanly by the first feature at 0.5."""
    x = np.array([
        [0.1, 0.3, 0.2], [0.2, 0.1, 0.9], [0.3, 0.8, 0.1], [0.4, 0.5, 0.5],
        [0.6, 0.2, 0.4], [0.7, 0.9, 0.8], [0.8, 0.4, 0.0], [0.9, 0.6, 0.3],
    ])
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    return x, y


def random_dataset(seed, n=50):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 3))
    logit = 3.0 * (x[:, 0] - 0.5) + rng.normal(scale=0.4, size=n)
    y = (logit > 0).astype(np.int64)
    if y.min() == y.max():  # ensure both classes
        y[0] = 1 - y[0]
    return x, y


class TestTrain:
    def test_separable_fixture_reaches_training_auc_one(self):
        x, y = separable_eight()
        model = train(x, y, NO_SUBSAMPLE)
        scores = predict_proba_many(model, x)
        assert min(scores[y == 1]) > max(scores[y == 0])
        assert roc_auc(scores, y) == 1.0

    def test_single_class_rejected(self):
        x, _ = separable_eight()
        with pytest.raises(SingleClassDataset):
            train(x, np.ones(8), NO_SUBSAMPLE)

    def test_length_mismatch(self):
        x, y = separable_eight()
        with pytest.raises(LengthMismatch):
            train(x, y[:-1], NO_SUBSAMPLE)

    def test_empty_and_tiny_datasets_rejected(self):
        with pytest.raises(EmptyDataset):
            train(np.zeros((0, 3)), np.zeros(0))
        with pytest.raises(EmptyDataset):
            train(np.zeros((1, 3)), np.zeros(1))

    def test_same_seed_gives_identical_model_files(self, tmp_path):
        x, y = random_dataset(1)
        hp = GbdtHyperparams(seed=7)
        p1, p2 = str(tmp_path / "m1.json"), str(tmp_path / "m2.json")
        save_model(train(x, y, hp), p1)
        save_model(train(x, y, hp), p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()
        assert model_file_hash(p1) == model_file_hash(p2)

    def test_different_seed_changes_subsampled_model(self):
        x, y = random_dataset(2, n=80)
        m1 = train(x, y, GbdtHyperparams(seed=1))
        m2 = train(x, y, GbdtHyperparams(seed=2))
        assert m1.trees != m2.trees

    def test_loss_non_increasing_without_subsampling(self):
        for seed in (3, 4, 5):
            x, y = random_dataset(seed, n=60)
            hp = GbdtHyperparams(subsample_rows=1.0, subsample_features=1.0,
                                 n_trees=40, seed=0)
            model = train(x, y, hp)
            losses = []
            for t in range(hp.n_trees + 1):
                raw = classifier._predict_raw(model.trees, model.base_logit,
                                              hp.learning_rate, x, n_trees=t)
                losses.append(logistic_loss(raw, y))
            assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_depth_capped_and_children_meet_hessian_floor(self):
        x, y = random_dataset(6, n=120)
        hp = GbdtHyperparams(subsample_rows=1.0, subsample_features=1.0,
                             n_trees=30, max_depth=3, min_child_hessian=1.0, seed=0)
        model = train(x, y, hp)
        model.validate()  # depth <= max_depth, feature indices in range

        raw = np.zeros(len(y))
        for tree in model.trees:
            p = 1.0 / (1.0 + np.exp(-raw))
            h = p * (1.0 - p)
            leaf_hessians = {}
            for i, row in enumerate(x):
                node = tree
                while "weight" not in node:
                    node = node["left"] if row[node["feature"]] < node["threshold"] else node["right"]
                leaf_hessians.setdefault(id(node), 0.0)
                leaf_hessians[id(node)] += h[i]
            if "weight" not in tree:  # skip root-only trees
                assert all(v >= hp.min_child_hessian - 1e-9
                           for v in leaf_hessians.values())
            raw += hp.learning_rate * np.array(
                [classifier._tree_predict(tree, row) for row in x])

    def test_gamma_prunes_weak_splits(self):
        x, y = random_dataset(7, n=40)
        strict = GbdtHyperparams(subsample_rows=1.0, subsample_features=1.0,
                                 n_trees=5, gamma=1e6, seed=0)
        model = train(x, y, strict)
        assert all("weight" in t for t in model.trees)  # nothing worth splitting


class TestPredictProba:
    def test_zero_trees_gives_half(self):
        model = GbdtModel(trees=[], base_logit=0.0, hyperparams=GbdtHyperparams())
        assert predict_proba(model, np.array([0.3, 0.3, 0.3])) == 0.5

    def test_single_leaf_hand_value(self):
        model = GbdtModel(trees=[{"weight": 2.0}], base_logit=0.0,
                          hyperparams=GbdtHyperparams(learning_rate=0.1))
        expected = 1.0 / (1.0 + math.exp(-0.2))
        assert predict_proba(model, np.array([0.0, 0.0, 0.0])) == pytest.approx(
            expected, abs=1e-12)
        assert expected == pytest.approx(0.549834, abs=1e-6)

    def test_cluster_ordering_on_new_points(self):
        x, y = separable_eight()
        model = train(x, y, NO_SUBSAMPLE)
        anomalous = predict_proba(model, np.array([0.85, 0.5, 0.5]))
        normal = predict_proba(model, np.array([0.15, 0.5, 0.5]))
        assert anomalous > normal

    def test_probability_strictly_inside_unit_interval(self):
        x, y = random_dataset(8)
        model = train(x, y, GbdtHyperparams(seed=0))
        scores = predict_proba_many(model, x)
        assert np.all((scores > 0.0) & (scores < 1.0))


class TestRocAuc:
    def test_perfect_ordering(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_inverted_ordering(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_all_tied_scores(self):
        got = roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1])
        assert got == 0.5
        assert got == brute_force_auc([0.5] * 4, [0, 1, 0, 1])

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassDataset):
            roc_auc([0.1, 0.2], [1, 1])

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(9)
        for _ in range(60):
            n = int(rng.integers(2, 200))
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            # quantized scores produce plenty of ties
            s = np.round(rng.random(n), int(rng.integers(0, 3)))
            assert roc_auc(s, y) == pytest.approx(brute_force_auc(s, y), abs=1e-12)

    def test_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(10)
        s = rng.random(80)
        y = rng.integers(0, 2, size=80)
        y[0], y[1] = 0, 1
        base = roc_auc(s, y)
        for transform in (lambda v: 3.0 * v + 2.0, np.exp, lambda v: v ** 3):
            assert roc_auc(transform(s), y) == pytest.approx(base, abs=1e-12)

    def test_roc_points_span_unit_square(self):
        pts = roc_points([0.9, 0.8, 0.4, 0.2], [1, 0, 1, 0])
        assert pts[0] == (0.0, 0.0)
        assert pts[-1] == (1.0, 1.0)


class TestCrossValidate:
    def test_separable_feature_scores_perfectly(self):
        rng = np.random.default_rng(11)
        n = 60
        y = np.array([0, 1] * (n // 2))
        x = np.column_stack([
            y * 0.6 + rng.uniform(0, 0.3, n),  # separates at ~0.45
            rng.random(n),
            rng.random(n),
        ])
        report = cross_validate(x, y, k=5, hp=GbdtHyperparams(seed=1), seed=1)
        assert report.mean_auc == 1.0
        assert report.std_auc == 0.0
        assert len(report.per_fold_auc) == 5

    def test_k_larger_than_samples(self):
        x, y = separable_eight()
        with pytest.raises(TooFewSamples):
            cross_validate(x, y, k=9)

    def test_k_below_two(self):
        x, y = separable_eight()
        with pytest.raises(TooFewSamples):
            cross_validate(x, y, k=1)

    def test_rare_class_makes_fold_degenerate(self):
        x, _ = random_dataset(12, n=20)
        y = np.zeros(20, dtype=np.int64)
        y[0] = 1  # the only positive cannot appear in every training split
        with pytest.raises(FoldDegenerate):
            cross_validate(x, y, k=4)

    def test_folds_are_stratified_and_deterministic(self):
        y = np.array([0] * 30 + [1] * 20)
        folds_a = stratified_folds(y, 5, seed=3)
        folds_b = stratified_folds(y, 5, seed=3)
        assert all(np.array_equal(a, b) for a, b in zip(folds_a, folds_b))
        for fold in folds_a:
            assert (y[fold] == 1).sum() == 4
            assert (y[fold] == 0).sum() == 6

    def test_report_document_shape(self):
        x, y = random_dataset(13, n=40)
        report = cross_validate(x, y, k=4, hp=GbdtHyperparams(seed=2), seed=2)
        doc = report.to_document()
        assert doc["schema"] == "scenewatch-cv/1"
        assert len(doc["folds"]) == 4
        assert doc["mean_auc"] == pytest.approx(np.mean(doc["per_fold_auc"]))
        assert doc["std_auc"] == pytest.approx(np.std(doc["per_fold_auc"]))


class TestModelIO:
    def test_round_trip_prediction_parity(self, tmp_path):
        x, y = random_dataset(14)
        model = train(x, y, GbdtHyperparams(seed=5))
        path = str(tmp_path / "model.json")
        save_model(model, path)
        loaded = load_model(path)
        rng = np.random.default_rng(15)
        probe = rng.random((100, 3))
        assert np.array_equal(predict_proba_many(model, probe),
                              predict_proba_many(loaded, probe))

    def test_truncated_file_rejected(self, tmp_path):
        x, y = random_dataset(16)
        path = str(tmp_path / "model.json")
        save_model(train(x, y, GbdtHyperparams(seed=5)), path)
        blob = open(path, "rb").read()
        with open(path, "wb") as fh:
            fh.write(blob[: len(blob) // 2])
        with pytest.raises(ModelSchemaError):
            load_model(path)

    def test_wrong_schema_rejected(self, tmp_path):
        path = str(tmp_path / "model.json")
        with open(path, "w") as fh:
            json.dump({"schema": "not-a-model/1"}, fh)
        with pytest.raises(ModelSchemaError):
            load_model(path)

    def test_hyperparams_survive_round_trip(self, tmp_path):
        x, y = random_dataset(17)
        hp = GbdtHyperparams(learning_rate=0.05, n_trees=12, max_depth=2, seed=9)
        path = str(tmp_path / "model.json")
        save_model(train(x, y, hp), path)
        assert load_model(path).hyperparams == hp
