"""Gradient-boosted regression trees with a regularized second-order split gain.

Split gain for a node with gradient/hessian sums (G, H) split into (G_L, H_L)
and (G_R, H_R)::

    gain = 0.5 * (G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)) - gamma

and leaf weight ``-G / (H + lambda)``. Splits are found by exact greedy
enumeration over midpoints of adjacent distinct feature values; rows with
``x < threshold`` go left.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

from ..errors import DimensionMismatch, EmptyInput, TooFewRows


@dataclass(frozen=True)
class GbtConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 0  # unused: no row/column subsampling, kept for run metadata

    def __post_init__(self):
        if self.n_rounds < 1 or self.max_depth < 1:
            raise ValueError("n_rounds and max_depth must be >= 1")
        if self.learning_rate < 0 or self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("learning_rate, reg_lambda, gamma and min_child_weight must be >= 0")


DEFAULT_GRID = tuple(
    GbtConfig(n, eta, depth, lam, 0.0, 1.0)
    for n, eta, depth, lam in itertools.product((50, 200, 500), (0.05, 0.1, 0.3), (2, 3, 4), (0.0, 1.0))
)


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return self.value[node]
            rows = np.flatnonzero(active)
            go_left = X[rows, f[rows]] < self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"feature": int(f), "threshold": float(t), "left": int(l), "right": int(r),
                 "value": float(v), "gain": float(g)}
                for f, t, l, r, v, g in zip(self.feature, self.threshold, self.left, self.right, self.value, self.gain)
            ]
        }

    @classmethod
    def from_dict(cls, doc) -> "RegressionTree":
        nodes = doc["nodes"]
        col = lambda key, dtype: np.array([n[key] for n in nodes], dtype=dtype)
        return cls(col("feature", np.int64), col("threshold", float), col("left", np.int64),
                   col("right", np.int64), col("value", float), col("gain", float))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def split_gain(GL, HL, GR, HR, lam, gamma):
    G, H = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma


GAIN_TIE = 1e-12  # relative gap under which two candidate gains count as tied


@njit(cache=True)
def _split_kernel(g, h, X, idx, lam, gamma, mcw, tie):
    m = idx.size
    p = X.shape[1]
    G = 0.0
    H = 0.0
    for r in idx:
        G += g[r]
        H += h[r]
    parent = G * G / (H + lam) if H + lam > 0 else 0.0
    gains = np.full((p, max(m - 1, 1)), -np.inf)
    thr = np.zeros((p, max(m - 1, 1)))
    top = -np.inf
    for f in range(p):
        xs = np.empty(m)
        for j in range(m):
            xs[j] = X[idx[j], f]
        order = np.argsort(xs, kind="mergesort")
        GL = 0.0
        HL = 0.0
        for j in range(m - 1):
            r = idx[order[j]]
            GL += g[r]
            HL += h[r]
            a = xs[order[j]]
            b = xs[order[j + 1]]
            if not a < b:
                continue
            HR = H - HL
            if HL < mcw or HR < mcw or HL + lam <= 0 or HR + lam <= 0:
                continue
            GR = G - GL
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - gamma
            gains[f, j] = gain
            thr[f, j] = 0.5 * (a + b)
            if gain > top:
                top = gain
    if top == -np.inf:
        return -1, 0.0, top
    cut = top - tie * max(1.0, abs(top))
    for f in range(p):
        for j in range(m - 1):
            if gains[f, j] >= cut:
                return f, thr[f, j], gains[f, j]
    return -1, 0.0, top


def best_split(g, h, X, idx, config: GbtConfig) -> Split | None:
    """Highest-gain (feature, midpoint) over rows ``idx``.

    Gains within ``GAIN_TIE`` (relative) of the maximum are ties, resolved
    toward the lowest feature index and then the lowest threshold, so the
    choice does not depend on summation order.
    """
    f, thr, gain = _split_kernel(g, h, X, np.asarray(idx, dtype=np.int64), float(config.reg_lambda),
                                 float(config.gamma), float(config.min_child_weight), GAIN_TIE)
    return None if f < 0 else Split(int(f), float(thr), float(gain))


def leaf_weight(g, h, idx, lam) -> float:
    H = h[idx].sum()
    return float(-g[idx].sum() / (H + lam)) if H + lam > 0 else 0.0


def _noise_floor(g, h, idx) -> float:
    """Gains below this are rounding noise (e.g. a split of equal gradients).

    ``0.5 * sum(g^2 / h)`` bounds the gain of any partition of the node when
    lambda is 0, so the floor scales with the node's own gradients.
    """
    gi, hi = g[idx], h[idx]
    pos = hi > 0
    return GAIN_TIE * 0.5 * float(np.sum(gi[pos] ** 2 / hi[pos]))


def fit_tree(g, h, X, config: GbtConfig) -> RegressionTree:
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(g) == 0:
        raise EmptyInput("cannot grow a tree on zero rows")
    if not (len(g) == len(h) == len(X)):
        raise DimensionMismatch("g, h and X row counts differ")
    if np.any(h < 0):
        raise ValueError("hessians must be nonnegative")

    feature, threshold, left, right, value, gains = [], [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0), (gains, 0.0)):
            lst.append(v)
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node()
        value[node] = leaf_weight(g, h, idx, config.reg_lambda)
        if depth >= config.max_depth or len(idx) < 2:
            return node
        split = best_split(g, h, X, idx, config)
        if split is None or not split.gain > _noise_floor(g, h, idx):
            return node
        mask = X[idx, split.feature] < split.threshold
        feature[node], threshold[node], gains[node] = split.feature, split.threshold, split.gain
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(g)), 0)
    return RegressionTree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), np.array(gains),
    )


@dataclass
class GbtEnsemble:
    base_prediction: float
    trees: list
    learning_rate: float
    n_features: int
    train_rmse: list = field(default_factory=list)
    config: GbtConfig | None = None

    def staged_predict(self, X):
        """Predictions after each round (row k = k+1 trees)."""
        X = _check_width(self, X)
        pred = np.full(len(X), self.base_prediction)
        for tree in self.trees:
            pred = pred + self.learning_rate * tree.predict(X)
            yield pred

    def feature_importance(self) -> np.ndarray:
        total = np.zeros(self.n_features)
        for tree in self.trees:
            for f, gain in zip(tree.feature, tree.gain):
                if f >= 0:
                    total[f] += gain
        return total

    def to_dict(self) -> dict:
        return {
            "base_prediction": self.base_prediction,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "config": asdict(self.config) if self.config else None,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GbtEnsemble":
        doc = json.loads(text)
        cfg = GbtConfig(**doc["config"]) if doc.get("config") else None
        return cls(doc["base_prediction"], [RegressionTree.from_dict(t) for t in doc["trees"]],
                   doc["learning_rate"], doc["n_features"], config=cfg)


def _check_width(ens: GbtEnsemble, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if ens.n_features == 1 else X[None, :]
    if X.shape[1] != ens.n_features:
        raise DimensionMismatch(f"ensemble takes {ens.n_features} features, got {X.shape[1]}")
    return X


def boost(X_train, y_train, config: GbtConfig) -> GbtEnsemble:
    """Squared-error boosting: each round fits a tree to g = yhat - y, h = 1."""
    X = np.asarray(X_train, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y_train, dtype=float)
    if len(y) < 2 or len(X) != len(y):
        raise TooFewRows("boosting needs at least 2 rows and matching X/y")
    base = float(y.mean())
    pred = np.full(len(y), base)
    h = np.ones(len(y))
    trees, rmse = [], [math.sqrt(float(np.mean((pred - y) ** 2)))]
    for _ in range(config.n_rounds):
        tree = fit_tree(pred - y, h, X, config)
        trees.append(tree)
        pred = pred + config.learning_rate * tree.predict(X)
        rmse.append(math.sqrt(float(np.mean((pred - y) ** 2))))
    return GbtEnsemble(base, trees, config.learning_rate, X.shape[1], rmse, config)


def predict(ensemble: GbtEnsemble, X) -> np.ndarray:
    X = _check_width(ensemble, X)
    pred = np.full(len(X), ensemble.base_prediction)
    for tree in ensemble.trees:
        pred = pred + ensemble.learning_rate * tree.predict(X)
    return pred


def chronological_folds(n: int, k: int):
    """Contiguous validation blocks, sizes differing by at most one."""
    return [block for block in np.array_split(np.arange(n), k)]


@dataclass
class CvResult:
    config: GbtConfig
    table: list  # (config, mean validation RMSE)


def grid_search_cv(grid, X_train, y_train, k: int = 3) -> CvResult:
    """Mean validation RMSE over ``k`` chronological blocks; lowest wins.

    Ties go to fewer rounds, then shallower trees. Configs that differ only
    in ``n_rounds`` share one boosting run per fold.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty GBT grid")
    X = np.asarray(X_train, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y_train, dtype=float)
    if k < 2:
        raise TooFewRows("need at least 2 folds")
    if len(y) < 2 * k:
        raise TooFewRows(f"{len(y)} rows cannot form {k} folds with >= 2 training rows")
    folds = chronological_folds(len(y), k)

    families: dict = {}
    for cfg in grid:
        families.setdefault(replace(cfg, n_rounds=1), []).append(cfg)
    scores: dict = {}
    for fam, members in families.items():
        longest = max(c.n_rounds for c in members)
        wanted = {c.n_rounds for c in members}
        sq = {r: [] for r in wanted}
        for val in folds:
            train = np.setdiff1d(np.arange(len(y)), val)
            ens = boost(X[train], y[train], replace(fam, n_rounds=longest))
            for r, pred in enumerate(ens.staged_predict(X[val]), start=1):
                if r in wanted:
                    sq[r].append(math.sqrt(float(np.mean((pred - y[val]) ** 2))))
        for c in members:
            scores[c] = float(np.mean(sq[c.n_rounds]))
    table = [(c, scores[c]) for c in grid]
    # scores within rounding noise of the minimum are ties
    low = min(scores.values())
    slack = GAIN_TIE * max(low, float(np.std(y)))
    tied = [i for i, c in enumerate(grid) if scores[c] <= low + slack]
    best = min(tied, key=lambda i: (grid[i].n_rounds, grid[i].max_depth, i))
    return CvResult(grid[best], table)
