"""Exact Shapley attributions for tree ensembles.

:func:`tree_shap` is the polynomial-time path algorithm for tree models in
which features outside a coalition follow the training cover weights at every
split.  The recursion over the tree is the same for every input row (both
children are always visited; only the "one fractions" depend on the row), so
it is vectorized across rows.

:func:`brute_force_shap` computes the same game by enumerating all 2^d
coalitions and is kept only as a verification oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AllZeroImportance, EmptyRows, MissingCover, TooManyFeatures
from .models.ensemble import TreeEnsemble
from .models.tree import LEAF, Tree

MAX_BRUTE_FORCE_FEATURES = 15


@dataclass(frozen=True)
class ShapVector:
    phi: np.ndarray
    base_value: float
    prediction: float


@dataclass(frozen=True)
class ShapMatrix:
    """Attributions for many rows: ``phi`` is (n_rows, n_features)."""

    phi: np.ndarray
    base_value: float
    prediction: np.ndarray
    feature_names: tuple

    def row(self, i: int) -> ShapVector:
        return ShapVector(self.phi[i], self.base_value, float(self.prediction[i]))

    def local_accuracy_error(self) -> float:
        return float(np.max(np.abs(self.base_value + self.phi.sum(axis=1) - self.prediction)))


def _check_cover(tree: Tree) -> None:
    cover = getattr(tree, "cover", None)
    if cover is None or len(cover) != tree.n_nodes or np.any(~np.isfinite(cover)) or np.any(cover <= 0):
        raise MissingCover("tree nodes need positive cover weights from training")


def tree_expected_value(tree: Tree) -> float:
    leaves = tree.leaves
    return float(np.sum(tree.cover[leaves] * tree.value[leaves]) / tree.cover[0])


def _unwound_sum(z, o, w, idx):
    """Total permutation weight of the path with element ``idx`` removed."""
    depth = len(w) - 1
    of, zf = o[idx], z[idx]
    nz = of != 0
    of_safe = np.where(nz, of, 1.0)
    total_nz = np.zeros_like(w[0])
    total_z = np.zeros_like(w[0])
    nxt = w[depth]
    for i in range(depth - 1, -1, -1):
        tmp = nxt / ((i + 1) * of_safe)
        total_nz = total_nz + tmp
        nxt = w[i] - tmp * zf * (depth - i)
        total_z = total_z + w[i] / (zf * (depth - i))
    return np.where(nz, total_nz, total_z) * (depth + 1)


def _unwind(feat, z, o, w, idx):
    depth = len(w) - 1
    of, zf = o[idx], z[idx]
    nz = of != 0
    of_safe = np.where(nz, of, 1.0)
    w = list(w)
    nxt = w[depth]
    for i in range(depth - 1, -1, -1):
        tmp = w[i]
        w_nz = nxt * (depth + 1) / ((i + 1) * of_safe)
        nxt = tmp - w_nz * zf * (depth - i) / (depth + 1)
        w_z = tmp * (depth + 1) / (zf * (depth - i))
        w[i] = np.where(nz, w_nz, w_z)
    return feat[:idx] + feat[idx + 1:], z[:idx] + z[idx + 1:], o[:idx] + o[idx + 1:], w[:depth]


def _extend(feat, z, o, w, pz, po, pi, n_rows):
    depth = len(w)
    feat, z, o = feat + [pi], z + [pz], o + [po]
    w = list(w) + [np.ones(n_rows) if depth == 0 else np.zeros(n_rows)]
    for i in range(depth - 1, -1, -1):
        w[i + 1] = w[i + 1] + po * w[i] * (i + 1) / (depth + 1)
        w[i] = pz * w[i] * (depth - i) / (depth + 1)
    return feat, z, o, w


def tree_shap_matrix(tree: Tree, X, n_features: int | None = None) -> tuple[np.ndarray, float]:
    """Per-row attributions for a single tree: ``(phi, expected_value)``."""
    _check_cover(tree)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    n_rows = len(X)
    d = X.shape[1] if n_features is None else n_features
    phi = np.zeros((n_rows, d))
    feature, threshold = tree.feature, tree.threshold
    left, right, cover, value = tree.left, tree.right, tree.cover, tree.value

    def recurse(node, feat, z, o, w, pz, po, pi):
        feat, z, o, w = _extend(feat, z, o, w, pz, po, pi, n_rows)
        if feature[node] == LEAF:
            for i in range(1, len(w)):
                weight = _unwound_sum(z, o, w, i)
                phi[:, feat[i]] += weight * (o[i] - z[i]) * value[node]
            return
        split = int(feature[node])
        goes_left = (X[:, split] <= threshold[node]).astype(float)
        iz, io = 1.0, np.ones(n_rows)
        if split in feat[1:]:
            k = feat.index(split, 1)
            iz, io = z[k], o[k]
            feat, z, o, w = _unwind(feat, z, o, w, k)
        lc, rc = int(left[node]), int(right[node])
        recurse(lc, feat, z, o, w, iz * cover[lc] / cover[node], io * goes_left, split)
        recurse(rc, feat, z, o, w, iz * cover[rc] / cover[node], io * (1.0 - goes_left), split)

    recurse(0, [], [], [], [], 1.0, np.ones(n_rows), -1)
    return phi, tree_expected_value(tree)


def tree_shap_rows(model: TreeEnsemble, X) -> ShapMatrix:
    """Ensemble attributions: averaged over trees for a forest, summed and
    scaled by the learning rate (plus the base score) for boosting."""
    X = model.check_features(X)
    d = model.n_features
    phi = np.zeros((len(X), d))
    base = 0.0
    for t in model.trees:
        p, e = tree_shap_matrix(t, X, d)
        phi += p
        base += e
    if model.kind == "random_forest":
        k = max(len(model.trees), 1)
        phi /= k
        base /= k
    else:
        phi *= model.learning_rate
        base = model.base_score + model.learning_rate * base
    return ShapMatrix(phi, float(base), model.predict(X), model.feature_names)


def tree_shap(model, x) -> ShapVector:
    """Attributions for one row; accepts a :class:`TreeEnsemble` or a bare :class:`Tree`."""
    x = np.asarray(x, dtype=float).ravel()
    if isinstance(model, Tree):
        phi, base = tree_shap_matrix(model, x[None, :])
        return ShapVector(phi[0], base, float(model.predict(x[None, :])[0]))
    return tree_shap_rows(model, x[None, :]).row(0)


def _leaf_paths(tree: Tree):
    """For each leaf: its value and the (feature, threshold, went_left, cover ratio) steps."""
    out = []
    stack = [(0, [])]
    while stack:
        node, path = stack.pop()
        if tree.feature[node] == LEAF:
            out.append((float(tree.value[node]), path))
            continue
        f, t = int(tree.feature[node]), float(tree.threshold[node])
        for child, went_left in ((tree.left[node], True), (tree.right[node], False)):
            ratio = tree.cover[child] / tree.cover[node]
            stack.append((int(child), path + [(f, t, went_left, ratio)]))
    return out


def coalition_values(tree: Tree, x, n_features: int, background=None) -> np.ndarray:
    """v(S) for every coalition S, indexed by bitmask.

    Without ``background`` the features outside S follow the cover-weighted
    branches; with it, they are drawn from the background rows.
    """
    x = np.asarray(x, dtype=float).ravel()
    masks = np.arange(2**n_features)
    in_s = ((masks[:, None] >> np.arange(n_features)) & 1).astype(bool)
    if background is not None:
        bg = np.asarray(background, dtype=float)
        hybrid = np.where(in_s[:, None, :], x[None, None, :], bg[None, :, :])
        return tree.predict(hybrid.reshape(-1, n_features)).reshape(len(masks), len(bg)).mean(axis=1)
    _check_cover(tree)
    v = np.zeros(len(masks))
    for leaf_value, path in _leaf_paths(tree):
        factor = np.ones(len(masks))
        for f, t, went_left, ratio in path:
            follows = float((x[f] <= t) == went_left)
            factor *= np.where(in_s[:, f], follows, ratio)
        v += factor * leaf_value
    return v


def brute_force_shap(tree: Tree, x, background=None, n_features: int | None = None) -> ShapVector:
    """Shapley values by the classic subset formula (2^d coalitions)."""
    x = np.asarray(x, dtype=float).ravel()
    d = len(x) if n_features is None else n_features
    if d > MAX_BRUTE_FORCE_FEATURES:
        raise TooManyFeatures(f"{d} features exceeds the enumeration limit {MAX_BRUTE_FORCE_FEATURES}")
    v = coalition_values(tree, x, d, background)
    masks = np.arange(2**d)
    sizes = np.array([bin(m).count("1") for m in masks])
    weights = np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) if s < d else 0.0
                        for s in sizes])
    phi = np.zeros(d)
    for i in range(d):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(weights[without] * (v[without | bit] - v[without]))
    return ShapVector(phi, float(v[0]), float(v[-1]))


@dataclass(frozen=True)
class ShapSummary:
    feature_names: tuple
    mean_abs_phi: np.ndarray
    n_rows: int
    model_id: str = ""

    def as_dict(self) -> dict:
        return {f: float(v) for f, v in zip(self.feature_names, self.mean_abs_phi)}


@dataclass(frozen=True)
class ConcentrationScore:
    hhi: float
    top1_share: float


def shap_summary(model: TreeEnsemble, rows, model_id: str = "") -> ShapSummary:
    """Mean |phi| per feature over ``rows``."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if len(rows) == 0:
        raise EmptyRows("SHAP summary needs at least one row")
    m = tree_shap_rows(model, rows)
    return ShapSummary(model.feature_names, np.mean(np.abs(m.phi), axis=0), len(rows), model_id)


def summary_from_matrix(m: ShapMatrix, model_id: str = "") -> ShapSummary:
    if len(m.phi) == 0:
        raise EmptyRows("SHAP summary needs at least one row")
    return ShapSummary(m.feature_names, np.mean(np.abs(m.phi), axis=0), len(m.phi), model_id)


def shap_concentration(summary: ShapSummary) -> ConcentrationScore:
    """Herfindahl index and top-1 share of normalized importances."""
    v = np.asarray(summary.mean_abs_phi, dtype=float)
    total = float(v.sum())
    if not total > 0:
        raise AllZeroImportance("all SHAP importances are zero")
    shares = v / total
    return ConcentrationScore(float(np.sum(shares**2)), float(shares.max()))


def write_shap_csv(path, model_id: str, keys, m: ShapMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", "region", "year", "feature", "phi", "base_value"])
        for (region, year), row in zip(keys, m.phi):
            for f, p in zip(m.feature_names, row):
                w.writerow([model_id, region, year, f, repr(float(p)), repr(m.base_value)])


def write_summary_csv(path, summary: ShapSummary) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", "feature", "mean_abs_phi"])
        for f, v in zip(summary.feature_names, summary.mean_abs_phi):
            w.writerow([summary.model_id, f, repr(float(v))])
