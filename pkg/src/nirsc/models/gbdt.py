"""Newton-boosted regression trees for binary classification.

Each round fits a tree to the first and second derivatives of the
(class-weighted) logistic loss. Trees grow best-first: the leaf whose best
split has the largest gain is expanded next, until ``max_leaves`` leaves
exist, ``max_depth`` is reached or no split has positive gain. Leaf values
are ``-soft_threshold(G, alpha) / (H + lambda)``.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..core import DegenerateClass, GridMismatch, InvalidConfig, check_random_state, derive_seed
from . import _splitter as sp


@dataclass(frozen=True)
class GossConfig:
    top_fraction: float = 0.2
    random_fraction: float = 0.1

    def __post_init__(self):
        a, b = self.top_fraction, self.random_fraction
        if not (0 < a <= 1 and 0 <= b and a + b <= 1 + 1e-12):
            raise InvalidConfig("GOSS needs 0 < a <= 1, b >= 0 and a + b <= 1")


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    max_leaves: int = 31
    class_weight: float = 1.0
    subsample: float = 1.0
    colsample_by_tree: float = 1.0
    l1_alpha: float = 0.0
    l2_lambda: float = 1.0
    goss: Optional[GossConfig] = None
    min_samples_leaf: int = 1
    min_child_weight: float = 1e-3
    min_split_gain: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.goss, dict):
            object.__setattr__(self, "goss", GossConfig(**self.goss))
        checks = [
            (self.n_trees >= 0, "n_trees must be >= 0"),
            (0 < self.learning_rate <= 1, "learning_rate must lie in (0, 1]"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (self.max_leaves >= 2, "max_leaves must be >= 2"),
            (self.class_weight > 0, "class_weight must be positive"),
            (0 < self.subsample <= 1, "subsample must lie in (0, 1]"),
            (0 < self.colsample_by_tree <= 1, "colsample_by_tree must lie in (0, 1]"),
            (self.l1_alpha >= 0 and self.l2_lambda >= 0, "regularisation must be >= 0"),
            (self.min_samples_leaf >= 1, "min_samples_leaf must be >= 1"),
            (self.min_child_weight >= 0 and self.min_split_gain >= 0, "minimums must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)

    def to_dict(self) -> dict:
        return asdict(self)


def _ceil(x: float) -> int:
    return math.ceil(round(x, 9))


def goss_sample(gradients, a: float, b: float, seed):
    """Gradient-based one-side sampling.

    Keeps the ``ceil(a*n)`` rows with the largest ``|gradient|`` (ties by
    lower index) and ``ceil(b*n)`` rows drawn uniformly from the rest, whose
    gradient statistics are scaled by ``(1 - a) / b``.

    Returns ``(indices, multipliers)`` with indices in ascending order.
    """
    GossConfig(a, b)
    g = np.abs(np.asarray(gradients, dtype=float))
    n = len(g)
    order = np.argsort(-g, kind="stable")
    n_top = min(_ceil(a * n), n)
    rest = order[n_top:]
    n_rand = min(_ceil(b * n), len(rest))
    rng = check_random_state(seed)
    picked = rng.choice(rest, size=n_rand, replace=False) if n_rand else np.empty(0, dtype=int)
    idx = np.concatenate([order[:n_top], picked]).astype(np.int64)
    mult = np.concatenate([np.ones(n_top), np.full(n_rand, (1.0 - a) / b if b > 0 else 1.0)])
    sort = np.argsort(idx)
    return idx[sort], mult[sort]


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    def predict(self, X) -> np.ndarray:
        return sp.predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
            "gain": [float(v) for v in self.gain],
            "cover": [float(v) for v in self.cover],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = {k: np.asarray(d[k], dtype=np.int64) for k in ("feature", "left", "right")}
        floats = {k: np.asarray(d[k], dtype=float) for k in ("threshold", "value", "gain", "cover")}
        return cls(**ints, **floats)


def grow_tree(XT, g, h, rows, feats, config: GbdtConfig) -> Tree:
    """Grow one tree best-first.

    ``XT`` is the feature-major (transposed) training matrix and ``rows`` is the ``(len(feats), n_selected)`` matrix of selected sample
    indices presorted per candidate feature.
    """
    lam, alpha = float(config.l2_lambda), float(config.l1_alpha)
    msl, mcw, msg = int(config.min_samples_leaf), float(config.min_child_weight), float(config.min_split_gain)
    feature, threshold, left, right, value, gain, cover = [], [], [], [], [], [], []

    def new_node(G, H):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(sp.leaf_weight(G, H, lam, alpha))
        gain.append(0.0)
        cover.append(H)
        return len(feature) - 1

    heap = []

    def consider(node, node_rows, G, H, depth):
        if depth >= config.max_depth or node_rows.shape[1] < 2:
            return
        best = sp.find_best_split(XT, g, h, node_rows, feats, G, H, lam, alpha, msl, mcw, msg)
        if best[1] >= 0:
            # (-gain, node id) pops the best gain, earliest node on ties
            heapq.heappush(heap, (-best[0], node, node_rows, G, H, depth, best))

    G0, H0 = sp.node_sums(rows, g, h)
    consider(new_node(G0, H0), rows, G0, H0, 0)
    n_leaves = 1
    while heap and n_leaves < config.max_leaves:
        _, node, node_rows, G, H, depth, best = heapq.heappop(heap)
        split_gain, fi, thr, gl, hl, nl = best
        f = int(feats[fi])
        lrows, rrows = sp.partition(node_rows, XT, f, thr, nl)
        li = new_node(gl, hl)
        ri = new_node(G - gl, H - hl)
        feature[node], threshold[node] = f, thr
        left[node], right[node], gain[node] = li, ri, split_gain
        n_leaves += 1
        consider(li, lrows, gl, hl, depth + 1)
        consider(ri, rrows, G - gl, H - hl, depth + 1)
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
        gain=np.asarray(gain, dtype=float),
        cover=np.asarray(cover, dtype=float),
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def weighted_logloss(y, raw, w) -> float:
    """Weighted mean of the logistic loss at raw scores ``raw``."""
    loss = np.logaddexp(0.0, raw) - y * raw
    return float(np.sum(w * loss) / np.sum(w))


@dataclass
class BoostedEnsemble:
    base_score: float
    learning_rate: float
    n_features: int
    trees: list = field(default_factory=list)
    config: Optional[dict] = None
    train_loss: list = field(default_factory=list)

    def decision_function(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise GridMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        raw = np.full(len(X), self.base_score)
        for tree in self.trees:
            raw += self.learning_rate * tree.predict(X)
        return raw

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def used_features(self) -> set:
        return {int(f) for t in self.trees for f in t.feature if f >= 0}

    def to_dict(self) -> dict:
        return {
            "kind": "gbdt",
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "config": self.config,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedEnsemble":
        return cls(
            base_score=float(d["base_score"]),
            learning_rate=float(d["learning_rate"]),
            n_features=int(d["n_features"]),
            trees=[Tree.from_dict(t) for t in d["trees"]],
            config=d.get("config"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def prior_log_odds(y, class_weight: float) -> float:
    pos = class_weight * float(np.sum(y == 1))
    neg = float(np.sum(y == 0))
    return math.log(pos / neg)


def gbdt_fit(features, labels, config: GbdtConfig = GbdtConfig()) -> BoostedEnsemble:
    X = np.ascontiguousarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise InvalidConfig("features must be (n_samples, n_features) aligned with labels")
    if len(y) < 2 or not np.isin(y, (0, 1)).all() or len(np.unique(y)) < 2:
        raise DegenerateClass("boosting needs binary labels with both classes present")
    if not np.all(np.isfinite(X)):
        raise InvalidConfig("features must be finite")
    n, n_feat = X.shape
    w = np.where(y == 1, float(config.class_weight), 1.0)
    base = prior_log_odds(y, config.class_weight)
    ens = BoostedEnsemble(base, float(config.learning_rate), n_feat, config=config.to_dict())
    raw = np.full(n, base)
    ens.train_loss.append(weighted_logloss(y, raw, w))
    if config.n_trees == 0:
        return ens
    XT = np.ascontiguousarray(X.T)
    presorted = np.argsort(XT, axis=1, kind="stable")
    n_cols = max(1, int(round(config.colsample_by_tree * n_feat)))
    n_sub = max(2, int(round(config.subsample * n)))
    for t in range(config.n_trees):
        rng = check_random_state(derive_seed(config.seed, t))
        p = _sigmoid(raw)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        if config.goss is not None:
            idx, mult = goss_sample(g, config.goss.top_fraction, config.goss.random_fraction, rng)
            g = g.copy()
            h = h.copy()
            g[idx] *= mult
            h[idx] *= mult
        elif n_sub < n:
            idx = np.sort(rng.choice(n, size=n_sub, replace=False))
        else:
            idx = None
        feats = np.arange(n_feat) if n_cols == n_feat else np.sort(rng.choice(n_feat, n_cols, replace=False))
        rows = presorted[feats]
        if idx is not None:
            keep = np.zeros(n, dtype=bool)
            keep[idx] = True
            rows = rows[keep[rows]].reshape(len(feats), len(idx))
        tree = grow_tree(XT, g, h, np.ascontiguousarray(rows), feats.astype(np.int64), config)
        ens.trees.append(tree)
        raw += config.learning_rate * tree.predict(X)
        ens.train_loss.append(weighted_logloss(y, raw, w))
    return ens


def gbdt_predict_proba(ensemble: BoostedEnsemble, features) -> np.ndarray:
    return ensemble.predict_proba(features)


class BoostedTreesClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn front end for :func:`gbdt_fit` (binary labels 0/1).

    ``goss_top``/``goss_random`` enable one-side sampling when ``goss_top``
    is set; otherwise ``subsample`` draws rows without replacement.
    """

    def __init__(self, n_trees=100, learning_rate=0.1, max_depth=6, max_leaves=31,
                 class_weight=1.0, subsample=1.0, colsample_by_tree=1.0, l1_alpha=0.0,
                 l2_lambda=1.0, goss_top=None, goss_random=0.1, min_samples_leaf=1,
                 min_child_weight=1e-3, seed=0):
        self.n_trees = n_trees
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.max_leaves = max_leaves
        self.class_weight = class_weight
        self.subsample = subsample
        self.colsample_by_tree = colsample_by_tree
        self.l1_alpha = l1_alpha
        self.l2_lambda = l2_lambda
        self.goss_top = goss_top
        self.goss_random = goss_random
        self.min_samples_leaf = min_samples_leaf
        self.min_child_weight = min_child_weight
        self.seed = seed

    def _config(self) -> GbdtConfig:
        goss = None if self.goss_top is None else GossConfig(self.goss_top, self.goss_random)
        return GbdtConfig(
            n_trees=int(self.n_trees), learning_rate=float(self.learning_rate),
            max_depth=int(self.max_depth), max_leaves=int(self.max_leaves),
            class_weight=float(self.class_weight), subsample=float(self.subsample),
            colsample_by_tree=float(self.colsample_by_tree), l1_alpha=float(self.l1_alpha),
            l2_lambda=float(self.l2_lambda), goss=goss,
            min_samples_leaf=int(self.min_samples_leaf),
            min_child_weight=float(self.min_child_weight), seed=int(self.seed),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.array([0, 1])
        self.ensemble_ = gbdt_fit(X, y, self._config())
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "ensemble_")
        return self.ensemble_.decision_function(check_array(X))

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) >= 0.0).astype(int)
