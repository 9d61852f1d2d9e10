"""Random forest over flattened surface patches.

Trees use decision stumps (single feature vs threshold) at internal nodes
and store the positive-class fraction at leaves.  Splits minimize the
weighted Gini impurity of the children by exhaustive search over midpoint
thresholds; ties break toward the lowest feature index, then the lowest
threshold, so training is fully deterministic given the seed.

Trees are stored as flat parallel arrays (feature, threshold, left, right,
prob); internal nodes have feature >= 0, leaves feature == -1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ModelFormatError, TrainingError

MODEL_FORMAT = "evcorner-forest"
MODEL_VERSION = 1

LEAF = -1


@dataclass
class TreeConfig:
    max_depth: int = 10
    min_samples: int = 50
    min_impurity: float = 1e-6
    feature_subsample: int | None = None  # None = ceil(sqrt(K))


@dataclass
class ForestConfig:
    n_trees: int = 10
    bootstrap_fraction: float = 1.0
    seed: int = 0
    tree: TreeConfig = field(default_factory=TreeConfig)


@dataclass
class Tree:
    feature: np.ndarray    # int32, -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    prob: np.ndarray       # float64, meaningful at leaves

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] < self.threshold[node] \
                else self.right[node]
        return float(self.prob[node])


@dataclass
class Forest:
    trees: list[Tree]
    n_features: int
    metadata: dict = field(default_factory=dict)

    def predict(self, x) -> float:
        """Mean leaf probability over all trees (in [0, 1])."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.n_features:
            raise ConfigError(
                f"patch has {x.shape[0]} features, model expects {self.n_features}")
        return sum(t.predict_one(x) for t in self.trees) / len(self.trees)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise ConfigError(
                f"patches have {X.shape[1]} features, model expects {self.n_features}")
        return np.array([self.predict(row) for row in X])

    def flatten(self):
        """Concatenate all trees into the flat arrays the detect kernel uses."""
        feat, thr, left, right, prob, roots = [], [], [], [], [], []
        offset = 0
        for t in self.trees:
            roots.append(offset)
            feat.append(t.feature)
            thr.append(t.threshold)
            left.append(np.where(t.left >= 0, t.left + offset, t.left))
            right.append(np.where(t.right >= 0, t.right + offset, t.right))
            prob.append(t.prob)
            offset += len(t.feature)
        return (np.concatenate(feat).astype(np.int32),
                np.concatenate(thr).astype(np.float64),
                np.concatenate(left).astype(np.int32),
                np.concatenate(right).astype(np.int32),
                np.concatenate(prob).astype(np.float64),
                np.array(roots, dtype=np.int32))


def _gini(n_pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = n_pos / n
    return 2.0 * p * (1.0 - p)


def _best_split(X, y, feature_ids):
    """Exhaustive stump search over the given features.

    Returns (impurity, k, th) of the best weighted child Gini, or None if no
    feature admits a split.  Features are scanned in ascending index order
    and thresholds in ascending order, accepting only strict improvements,
    which realizes the lowest-(k, th) tie-break.
    """
    n = len(y)
    best = None
    for k in sorted(feature_ids):
        v = X[:, k]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ys = y[order]
        # split boundaries sit between consecutive distinct values
        change = np.flatnonzero(vs[1:] != vs[:-1]) + 1
        if change.size == 0:
            continue
        pos_prefix = np.cumsum(ys)
        total_pos = pos_prefix[-1]
        nl = change.astype(np.float64)
        pl = pos_prefix[change - 1].astype(np.float64)
        nr = n - nl
        pr = total_pos - pl
        gl = 2.0 * (pl / nl) * (1.0 - pl / nl)
        gr = 2.0 * (pr / nr) * (1.0 - pr / nr)
        weighted = (nl * gl + nr * gr) / n
        ths = (vs[change - 1] + vs[change]) / 2.0
        for j in range(len(change)):
            cand = (weighted[j], k, ths[j])
            if best is None or cand[0] < best[0]:
                best = cand
    return best


class _TreeBuilder:
    def __init__(self, X, y, config: TreeConfig, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.config = config
        self.rng = rng
        n_feat = X.shape[1]
        if config.feature_subsample is None:
            self.m = math.ceil(math.sqrt(n_feat))
        else:
            self.m = min(config.feature_subsample, n_feat)
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.prob = []

    def _add_node(self):
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.prob.append(0.0)
        return len(self.feature) - 1

    def build(self, idx: np.ndarray, depth: int) -> int:
        node = self._add_node()
        y = self.y[idx]
        n = len(idx)
        n_pos = int(y.sum())
        self.prob[node] = n_pos / n
        imp = _gini(n_pos, n)
        if (depth >= self.config.max_depth or n < self.config.min_samples
                or imp <= self.config.min_impurity):
            return node
        feats = self.rng.choice(self.X.shape[1], size=self.m, replace=False)
        best = _best_split(self.X[idx], y, feats)
        if best is None:
            return node
        _, k, th = best
        self.feature[node] = k
        self.threshold[node] = th
        go_left = self.X[idx, k] < th
        self.left[node] = self.build(idx[go_left], depth + 1)
        self.right[node] = self.build(idx[~go_left], depth + 1)
        return node

    def finish(self) -> Tree:
        return Tree(feature=np.array(self.feature, dtype=np.int32),
                    threshold=np.array(self.threshold, dtype=np.float64),
                    left=np.array(self.left, dtype=np.int32),
                    right=np.array(self.right, dtype=np.int32),
                    prob=np.array(self.prob, dtype=np.float64))


def train_tree(X, y, config: TreeConfig | None = None,
               rng: np.random.Generator | None = None) -> Tree:
    """Train one stump-split tree; leaves hold the positive-class fraction."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise TrainingError("training data must be a non-empty 2-D array")
    if len(X) != len(y):
        raise TrainingError(f"{len(X)} samples but {len(y)} labels")
    if np.any((y != 0) & (y != 1)):
        raise TrainingError("labels must be in {0, 1}")
    config = config or TreeConfig()
    rng = rng or np.random.default_rng(0)
    builder = _TreeBuilder(X, y, config, rng)
    builder.build(np.arange(len(X)), depth=0)
    return builder.finish()


def train_forest(X, y, config: ForestConfig | None = None,
                 metadata: dict | None = None) -> Forest:
    """Train an ensemble on bootstrap resamples; deterministic given the seed."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise TrainingError("training data must be a non-empty 2-D array")
    config = config or ForestConfig()
    if config.n_trees < 1:
        raise TrainingError("need at least one tree")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    trees = []
    n = len(X)
    n_boot = max(1, int(round(config.bootstrap_fraction * n)))
    for ss in seeds:
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, n, size=n_boot)
        trees.append(train_tree(X[idx], y[idx], config.tree, rng))
    meta = dict(metadata or {})
    meta.setdefault("n_trees", config.n_trees)
    return Forest(trees=trees, n_features=X.shape[1], metadata=meta)


def save_model(forest: Forest, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_features": forest.n_features,
        "metadata": forest.metadata,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "prob": t.prob.tolist(),
            }
            for t in forest.trees
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> Forest:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"{path}: model version {doc.get('version')} != {MODEL_VERSION}")
    try:
        trees = [
            Tree(feature=np.array(t["feature"], dtype=np.int32),
                 threshold=np.array(t["threshold"], dtype=np.float64),
                 left=np.array(t["left"], dtype=np.int32),
                 right=np.array(t["right"], dtype=np.int32),
                 prob=np.array(t["prob"], dtype=np.float64))
            for t in doc["trees"]
        ]
        forest = Forest(trees=trees, n_features=int(doc["n_features"]),
                        metadata=doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model payload: {exc}") from exc
    if not forest.trees:
        raise ModelFormatError(f"{path}: model contains no trees")
    return forest
