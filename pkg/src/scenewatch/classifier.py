"""Gradient-boosted decision trees for binary anomaly classification.

Boosted logistic model built from scratch: each round fits one regression
tree to the current gradients g = p - y and hessians h = p(1 - p) with exact
greedy splits maximizing

    1/2 * [G_L^2/(H_L + lam) + G_R^2/(H_R + lam) - G^2/(H + lam)] - gamma

and leaf weight -G/(H + lam). Row and feature subsampling are drawn per
round from a seeded generator, so training is fully deterministic for a
fixed seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    EmptyDataset,
    FoldDegenerate,
    LengthMismatch,
    ModelSchemaError,
    SingleClassDataset,
    TooFewSamples,
)

MODEL_SCHEMA = "scenewatch-gbdt/1"
CV_SCHEMA = "scenewatch-cv/1"


@dataclass(frozen=True)
class GbdtHyperparams:
    learning_rate: float = 0.1
    n_trees: int = 100
    max_depth: int = 3
    min_child_hessian: float = 1.0
    gamma: float = 0.0
    subsample_rows: float = 0.8
    subsample_features: float = 0.8
    l2_leaf_reg: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be >= 1")
        for name in ("subsample_rows", "subsample_features"):
            frac = getattr(self, name)
            if not (0.0 < frac <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {frac}")
        if self.min_child_hessian < 0 or self.gamma < 0 or self.l2_leaf_reg < 0:
            raise ValueError("regularization terms must be non-negative")


DEFAULT_HYPERPARAMS = GbdtHyperparams()


@dataclass
class GbdtModel:
    """Trained ensemble; trees are nested dicts (internal: feature/threshold/
    left/right, leaf: weight). Leaf weights are stored unscaled; the learning
    rate is applied at prediction time."""

    trees: list[dict]
    base_logit: float
    hyperparams: GbdtHyperparams
    n_features: int = 3

    def validate(self) -> None:
        def check(node: dict, depth: int) -> None:
            if "weight" in node:
                if not math.isfinite(node["weight"]):
                    raise ModelSchemaError("non-finite leaf weight")
                return
            if depth >= self.hyperparams.max_depth:
                raise ModelSchemaError(f"tree deeper than max_depth={self.hyperparams.max_depth}")
            if not (0 <= node["feature"] < self.n_features):
                raise ModelSchemaError(f"feature index {node['feature']} out of range")
            check(node["left"], depth + 1)
            check(node["right"], depth + 1)

        for tree in self.trees:
            check(tree, 0)


def _sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def _subsample_count(fraction: float, n: int) -> int:
    # half-up rounding, at least one
    return max(1, int(math.floor(fraction * n + 0.5)))


def _tree_predict(node: dict, row: np.ndarray) -> float:
    while "weight" not in node:
        node = node["left"] if row[node["feature"]] < node["threshold"] else node["right"]
    return float(node["weight"])


def _predict_raw(trees: list[dict], base_logit: float, learning_rate: float,
                 x: np.ndarray, n_trees: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    use = trees if n_trees is None else trees[:n_trees]
    out = np.full(x.shape[0], base_logit, dtype=np.float64)
    for tree in use:
        out += learning_rate * np.array([_tree_predict(tree, row) for row in x])
    return out


def _build_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, rows: np.ndarray,
                features: np.ndarray, hp: GbdtHyperparams, depth: int) -> dict:
    lam = hp.l2_leaf_reg
    g_sum = float(g[rows].sum())
    h_sum = float(h[rows].sum())

    best = None
    if depth < hp.max_depth and rows.size >= 2:
        parent_score = g_sum * g_sum / (h_sum + lam)
        for f in features:
            order = rows[np.argsort(x[rows, f], kind="stable")]
            xs = x[order, f]
            gc = np.cumsum(g[order])
            hc = np.cumsum(h[order])
            # candidate split after position i (left = order[:i+1])
            for i in range(order.size - 1):
                if xs[i] == xs[i + 1]:
                    continue
                hl = float(hc[i])
                hr = h_sum - hl
                if hl < hp.min_child_hessian or hr < hp.min_child_hessian:
                    continue
                gl = float(gc[i])
                gr = g_sum - gl
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score) - hp.gamma
                if gain > 0 and (best is None or gain > best[0]):
                    best = (gain, int(f), (xs[i] + xs[i + 1]) / 2.0)

    if best is None:
        return {"weight": -g_sum / (h_sum + lam)}

    _, feat, thr = best
    go_left = x[rows, feat] < thr
    left = _build_tree(x, g, h, rows[go_left], features, hp, depth + 1)
    right = _build_tree(x, g, h, rows[~go_left], features, hp, depth + 1)
    return {"feature": feat, "threshold": float(thr), "left": left, "right": right}


def train(features: np.ndarray, labels: np.ndarray,
          hp: GbdtHyperparams = DEFAULT_HYPERPARAMS) -> GbdtModel:
    """Fit the boosted ensemble. Deterministic for a fixed hp.seed."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.shape[0] != y.size:
        raise LengthMismatch(f"{x.shape[0]} feature rows vs {y.size} labels")
    if x.shape[0] < 2:
        raise EmptyDataset(f"need at least 2 samples, got {x.shape[0]}")
    if not (set(np.unique(y)) <= {0.0, 1.0}):
        raise ValueError("labels must be 0/1")
    if np.unique(y).size < 2:
        raise SingleClassDataset("training data contains a single class")

    n, n_features = x.shape
    rng = np.random.default_rng(hp.seed)
    base_logit = 0.0
    raw = np.full(n, base_logit, dtype=np.float64)
    trees: list[dict] = []

    n_rows = _subsample_count(hp.subsample_rows, n)
    n_feats = _subsample_count(hp.subsample_features, n_features)

    for _ in range(hp.n_trees):
        p = _sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        if hp.subsample_rows < 1.0:
            rows = np.sort(rng.choice(n, size=n_rows, replace=False))
        else:
            rows = np.arange(n)
        if hp.subsample_features < 1.0:
            feats = np.sort(rng.choice(n_features, size=n_feats, replace=False))
        else:
            feats = np.arange(n_features)
        tree = _build_tree(x, g, h, rows, feats, hp, depth=0)
        trees.append(tree)
        raw += hp.learning_rate * np.array([_tree_predict(tree, row) for row in x])

    return GbdtModel(trees=trees, base_logit=base_logit, hyperparams=hp, n_features=n_features)


def predict_proba(model: GbdtModel, fv: np.ndarray) -> float:
    """Probability of the anomaly class for one feature vector."""
    fv = np.asarray(fv, dtype=np.float64).ravel()
    if not np.isfinite(fv).all():
        raise ValueError("feature vector must be finite")
    raw = _predict_raw(model.trees, model.base_logit, model.hyperparams.learning_rate, fv)
    return float(_sigmoid(raw[0]))


def predict_proba_many(model: GbdtModel, x: np.ndarray) -> np.ndarray:
    raw = _predict_raw(model.trees, model.base_logit, model.hyperparams.learning_rate, x)
    return np.asarray(_sigmoid(raw), dtype=np.float64)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC via the Mann-Whitney rank statistic with average ranks for ties."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.size != y.size:
        raise LengthMismatch(f"{s.size} scores vs {y.size} labels")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("AUC needs both classes")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(scores: np.ndarray, labels: np.ndarray) -> list[tuple[float, float]]:
    """(fpr, tpr) step points from the highest threshold downwards."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    order = np.argsort(-s, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[order[j + 1]] == s[order[i]]:
            j += 1
        block = y[order[i:j + 1]]
        tp += int((block == 1).sum())
        fp += int((block == 0).sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return points


@dataclass
class CVReport:
    k: int
    per_fold_auc: list[float]
    mean_auc: float
    std_auc: float
    per_fold_roc: list[list[tuple[float, float]]]

    def to_document(self) -> dict:
        return {
            "schema": CV_SCHEMA,
            "k": self.k,
            "per_fold_auc": self.per_fold_auc,
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "folds": [{"roc": [[float(f), float(t)] for f, t in pts]}
                      for pts in self.per_fold_roc],
        }


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment (round-robin after a shuffle)."""
    y = np.asarray(labels).ravel().astype(np.int64)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for pos, sample in enumerate(idx):
            folds[pos % k].append(int(sample))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def cross_validate(features: np.ndarray, labels: np.ndarray, k: int,
                   hp: GbdtHyperparams = DEFAULT_HYPERPARAMS, seed: int = 0) -> CVReport:
    """Stratified k-fold CV; per-fold AUC on the held-out split."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).ravel().astype(np.int64)
    if k < 2:
        raise TooFewSamples(f"k must be >= 2, got {k}")
    if k > y.size:
        raise TooFewSamples(f"k={k} folds but only {y.size} samples")
    if np.unique(y).size < 2:
        raise SingleClassDataset("cross-validation needs both classes")

    folds = stratified_folds(y, k, seed)
    for i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(y.size), test_idx)
        for name, idx in (("training", train_idx), ("test", test_idx)):
            if np.unique(y[idx]).size < 2:
                raise FoldDegenerate(f"fold {i}: {name} split has a single class")

    aucs: list[float] = []
    rocs: list[list[tuple[float, float]]] = []
    for i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(y.size), test_idx)
        fold_hp = GbdtHyperparams(**{**asdict(hp), "seed": hp.seed * 1000 + i})
        model = train(x[train_idx], y[train_idx], fold_hp)
        scores = predict_proba_many(model, x[test_idx])
        aucs.append(roc_auc(scores, y[test_idx]))
        rocs.append(roc_points(scores, y[test_idx]))
    return CVReport(
        k=k,
        per_fold_auc=aucs,
        mean_auc=float(np.mean(aucs)),
        std_auc=float(np.std(aucs)),
        per_fold_roc=rocs,
    )


def model_document(model: GbdtModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "hyperparams": asdict(model.hyperparams),
        "n_features": model.n_features,
        "base_logit": model.base_logit,
        "trees": model.trees,
    }


def save_model(model: GbdtModel, path: str) -> None:
    blob = json.dumps(model_document(model), indent=2) + "\n"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_model(path: str) -> GbdtModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelSchemaError(f"{path}: cannot read model: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        raise ModelSchemaError(f"{path}: schema: expected {MODEL_SCHEMA!r}")
    try:
        hp = GbdtHyperparams(**doc["hyperparams"])
        model = GbdtModel(
            trees=doc["trees"],
            base_logit=float(doc["base_logit"]),
            hyperparams=hp,
            n_features=int(doc.get("n_features", 3)),
        )
        model.validate()
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelSchemaError(f"{path}: malformed model: {exc}") from exc
    return model


def model_file_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
