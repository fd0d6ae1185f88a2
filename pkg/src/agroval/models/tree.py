"""CART regression trees grown by greedy variance reduction.

Trees are stored as flat node arrays in depth-first preorder.  An internal
node routes ``x[feature] <= threshold`` to ``left``; leaves have
``feature == -1``.  Every node keeps its mean target (``value``), its
training sample count and its cover weight (used by TreeSHAP).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateData

LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == LEAF)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if not self.is_leaf(node):
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def used_features(self) -> set:
        return {int(f) for f in self.feature if f != LEAF}

    def to_dict(self, node: int = 0) -> dict:
        d = {"value": float(self.value[node]), "n_samples": int(self.n_samples[node]),
             "cover": float(self.cover[node])}
        if not self.is_leaf(node):
            d["feature"] = int(self.feature[node])
            d["threshold"] = float(self.threshold[node])
            d["left"] = self.to_dict(int(self.left[node]))
            d["right"] = self.to_dict(int(self.right[node]))
        return d

    @classmethod
    def from_dict(cls, root: dict) -> "Tree":
        b = _Builder()

        def walk(n: dict) -> int:
            if "feature" not in n:
                return b.add_leaf(n["value"], n["n_samples"], n.get("cover", n["n_samples"]))
            idx = b.add_internal(n["feature"], n["threshold"], n["value"], n["n_samples"],
                                 n.get("cover", n["n_samples"]))
            b.left[idx] = walk(n["left"])
            b.right[idx] = walk(n["right"])
            return idx

        walk(root)
        return b.build()


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_samples, self.cover = [], [], []

    def _add(self, feature, threshold, value, n, cover) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.n_samples.append(n)
        self.cover.append(cover)
        return len(self.feature) - 1

    def add_leaf(self, value, n, cover=None) -> int:
        return self._add(LEAF, np.nan, value, n, n if cover is None else cover)

    def add_internal(self, feature, threshold, value, n, cover=None) -> int:
        return self._add(feature, threshold, value, n, n if cover is None else cover)

    def build(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.array(self.value, dtype=float),
            n_samples=np.array(self.n_samples, dtype=np.int64),
            cover=np.array(self.cover, dtype=float),
        )


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_samples_leaf: int):
    """Best (feature, threshold, gain) over midpoints, or None.

    Gain is the SSE reduction S_l^2 n / (n_l n_r) on centred targets.  Ties go
    to the earlier feature in ``features``, then the smaller threshold.
    """
    n = len(y)
    if n < 2 * min_samples_leaf or n < 2:
        return None
    yc = y - y.mean()
    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    left_sum = np.cumsum(yc[order], axis=0)[:-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    gain = left_sum * left_sum * n / (n_left * n_right)
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    gain = np.where(valid, gain, -np.inf).T  # (features, positions)
    flat = int(np.argmax(gain))
    j, pos = divmod(flat, n - 1)
    if not np.isfinite(gain[j, pos]):
        return None
    lo, hi = xs[pos, j], xs[pos + 1, j]
    threshold = (lo + hi) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return int(features[j]), float(threshold), float(gain[j, pos])


def _n_features_per_split(n_features: int, fraction: float) -> int:
    return max(1, min(n_features, int(math.ceil(fraction * n_features - 1e-12))))


def fit_cart(X, y, max_depth: int | None = None, min_samples_leaf: int = 1,
             feature_subsample: float = 1.0, rng: np.random.Generator | None = None) -> Tree:
    """Grow a regression tree; ``max_depth`` of None (or 0) means unlimited."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise DegenerateData(f"X has shape {X.shape} but y has length {len(y)}")
    if len(y) == 0:
        raise DegenerateData("cannot fit a tree on zero rows")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    if not max_depth:
        max_depth = None
    n_features = X.shape[1]
    k = _n_features_per_split(n_features, feature_subsample)
    if k < n_features and rng is None:
        rng = np.random.default_rng(0)
    all_features = np.arange(n_features)

    b = _Builder()

    def grow(idx: np.ndarray, depth: int) -> int:
        yn = y[idx]
        value = float(yn.mean())
        n = len(idx)
        stop = (max_depth is not None and depth >= max_depth) or n < 2 * min_samples_leaf or np.ptp(yn) == 0
        split = None
        if not stop:
            features = all_features if k == n_features else np.sort(rng.choice(n_features, k, replace=False))
            split = best_split(X[idx], yn, features, min_samples_leaf)
            sse = float(np.sum((yn - value) ** 2))
            if split is not None and split[2] <= 1e-12 * sse:
                split = None
        if split is None:
            return b.add_leaf(value, n)
        f, t, _ = split
        node = b.add_internal(f, t, value, n)
        go_left = X[idx, f] <= t
        b.left[node] = grow(idx[go_left], depth + 1)
        b.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return b.build()
