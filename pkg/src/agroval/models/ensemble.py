"""Random forests and squared-loss gradient boosting over :class:`Tree`."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigInvalid, FeatureMismatch
from .tree import Tree, fit_cart

MODEL_KINDS = ("random_forest", "gbt")
# reserved so result files stay compatible if sequence models are added
RESERVED_MODEL_KINDS = ("lstm", "tcn")

RF_DEFAULTS = {"n_trees": 100, "max_depth": None, "min_samples_leaf": 1, "feature_subsample": 1.0 / 3.0,
               "bootstrap": True}
GBT_DEFAULTS = {"n_trees": 100, "max_depth": 3, "min_samples_leaf": 1, "learning_rate": 0.1,
                "subsample": 1.0, "feature_subsample": 1.0}


def normalize_kind(kind: str) -> str:
    aliases = {"rf": "random_forest", "random_forest": "random_forest", "gbt": "gbt", "xgb": "gbt"}
    try:
        return aliases[kind.lower()]
    except KeyError:
        raise ConfigInvalid(f"unknown model kind {kind!r}") from None


@dataclass(frozen=True)
class TreeEnsemble:
    kind: str
    trees: tuple
    feature_names: tuple
    learning_rate: float = 1.0
    base_score: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def check_features(self, X, feature_names=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if feature_names is not None and tuple(feature_names) != self.feature_names:
            raise FeatureMismatch(f"model expects features {self.feature_names}, got {tuple(feature_names)}")
        if X.shape[1] != self.n_features:
            raise FeatureMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def predict(self, X, feature_names=None) -> np.ndarray:
        X = self.check_features(X, feature_names)
        if self.kind == "random_forest":
            if not self.trees:
                return np.full(len(X), np.nan)
            return np.mean([t.predict(X) for t in self.trees], axis=0)
        out = np.full(len(X), float(self.base_score))
        for t in self.trees:
            out = out + self.learning_rate * t.predict(X)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "feature_names": list(self.feature_names),
            "base_score": float(self.base_score),
            "learning_rate": float(self.learning_rate),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(
            kind=d["kind"],
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            feature_names=tuple(d["feature_names"]),
            learning_rate=d.get("learning_rate", 1.0),
            base_score=d.get("base_score", 0.0),
            params=d.get("params", {}),
        )


def save_model(model: TreeEnsemble, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> TreeEnsemble:
    return TreeEnsemble.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict(model: TreeEnsemble, X, feature_names=None) -> np.ndarray:
    return model.predict(X, feature_names)


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, tree/stage index); parallel training reproduces serial."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


def fit_random_forest(X, y, params: dict | None = None, seed: int = 0, feature_names=None) -> TreeEnsemble:
    p = {**RF_DEFAULTS, **(params or {})}
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    trees = []
    for i in range(int(p["n_trees"])):
        rng = tree_rng(seed, i)
        idx = rng.integers(0, n, n) if p["bootstrap"] else np.arange(n)
        trees.append(fit_cart(X[idx], y[idx], p["max_depth"], int(p["min_samples_leaf"]),
                              float(p["feature_subsample"]), rng))
    names = feature_names or [f"x{j}" for j in range(X.shape[1])]
    return TreeEnsemble("random_forest", trees, names, 1.0, 0.0, p)


def fit_gbt(X, y, params: dict | None = None, seed: int = 0, feature_names=None) -> TreeEnsemble:
    """Stage m fits a CART to the residuals of stages < m; F_m = F_{m-1} + lr * tree_m."""
    p = {**GBT_DEFAULTS, **(params or {})}
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    lr = float(p["learning_rate"])
    base = float(y.mean())
    fitted = np.full(n, base)
    n_sub = max(1, int(round(float(p["subsample"]) * n)))
    trees = []
    for m in range(int(p["n_trees"])):
        rng = tree_rng(seed, m)
        residual = y - fitted
        rows = np.arange(n) if n_sub >= n else np.sort(rng.choice(n, n_sub, replace=False))
        tree = fit_cart(X[rows], residual[rows], p["max_depth"], int(p["min_samples_leaf"]),
                        float(p["feature_subsample"]), rng)
        fitted = fitted + lr * tree.predict(X)
        trees.append(tree)
    names = feature_names or [f"x{j}" for j in range(X.shape[1])]
    return TreeEnsemble("gbt", trees, names, lr, base, p)


def fit_model(kind: str, X, y, params: dict | None = None, seed: int = 0, feature_names=None) -> TreeEnsemble:
    kind = normalize_kind(kind)
    fit = fit_random_forest if kind == "random_forest" else fit_gbt
    return fit(X, y, params, seed, feature_names)
