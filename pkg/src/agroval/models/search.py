"""Hyperparameter grid search scored on expanding-window temporal folds."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigInvalid
from ..evaluate import rmse
from .ensemble import fit_model, normalize_kind

_RF_AXES = ("n_trees", "max_depth", "min_samples_leaf", "feature_subsample")
_GBT_AXES = ("n_trees", "max_depth", "min_samples_leaf", "learning_rate", "subsample")


@dataclass(frozen=True)
class HyperGrid:
    n_trees: tuple = (100, 300)
    max_depth: tuple = (3, 6, 10)
    min_samples_leaf: tuple = (1, 5)
    feature_subsample: tuple = (1.0 / 3.0,)
    learning_rate: tuple = (0.05, 0.1)
    subsample: tuple = (1.0,)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            v = tuple(v) if isinstance(v, (list, tuple)) else (v,)
            if not v:
                raise ConfigInvalid(f"hyper grid axis {f.name!r} is empty")
            # 0 / None both mean unlimited depth
            if f.name == "max_depth":
                v = tuple(None if d in (None, 0) else int(d) for d in v)
            object.__setattr__(self, f.name, v)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperGrid":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigInvalid(f"unknown hyper grid axes: {sorted(unknown)}")
        return cls(**d)

    def points(self, kind: str) -> list[dict]:
        """Cartesian product in axis order; the first point wins exact ties."""
        axes = _RF_AXES if normalize_kind(kind) == "random_forest" else _GBT_AXES
        return [dict(zip(axes, combo)) for combo in itertools.product(*(getattr(self, a) for a in axes))]


def grid_search(X, y, years, grid: HyperGrid, folds, kind: str, seed: int = 0, feature_names=None):
    """Mean fold RMSE for each grid point; returns ``(best_params, table)``.

    ``years`` gives the calendar year of each row of ``X``; ``folds`` is a
    sequence of ``(train_years, test_years)`` pairs.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    years = np.asarray(years)
    fold_masks = []
    for train_years, test_years in folds:
        tr = np.isin(years, list(train_years))
        te = np.isin(years, list(test_years))
        if tr.sum() == 0 or te.sum() == 0:
            raise ConfigInvalid(f"fold with train years {train_years} / test years {test_years} has no rows")
        fold_masks.append((tr, te))

    table = []
    best, best_score = None, np.inf
    for params in grid.points(kind):
        scores = []
        for tr, te in fold_masks:
            model = fit_model(kind, X[tr], y[tr], params, seed, feature_names)
            scores.append(rmse(y[te], model.predict(X[te])))
        mean = float(np.mean(scores))
        table.append({"params": params, "fold_rmse": [float(s) for s in scores], "mean_rmse": mean})
        if mean < best_score:
            best, best_score = params, mean
    return dict(best), table
