"""Skill metrics, the test-vs-validation diagnostic and model classification."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import Empty, LeakageDetected, LengthMismatch, MissingCells, ZeroVariance

LABELS = ("effective", "degrading", "underperforming")
DEFAULT_GAP_THRESHOLD = 0.2
BASELINES = ("eval_mean", "train_mean")


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if len(y) != len(yhat):
        raise LengthMismatch(f"{len(y)} observations but {len(yhat)} predictions")
    if len(y) == 0:
        raise Empty("no observations")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def r2(y, yhat, baseline_mean: float | None = None) -> float:
    """1 - SS_model / SS_naive, the naive model predicting a constant mean.

    The mean is that of ``y`` unless ``baseline_mean`` is given (e.g. the
    training-set mean).
    """
    y, yhat = _pair(y, yhat)
    if len(y) < 2:
        raise Empty("r2 needs at least two observations")
    mean = float(np.mean(y)) if baseline_mean is None else float(baseline_mean)
    ss_naive = float(np.sum((y - mean) ** 2))
    if ss_naive == 0:
        raise ZeroVariance("observations have zero variance about the baseline mean")
    ss_model = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_model / ss_naive


@dataclass(frozen=True)
class EvalResult:
    r2_test: float
    r2_validation: float
    rmse_test: float
    rmse_validation: float
    n_test: int
    n_validation: int
    baseline: str = "eval_mean"

    def to_dict(self) -> dict:
        return asdict(self)


def classify_model(r2_test: float, r2_validation: float, gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> str:
    """underperforming if validation R² < 0, degrading if the test-validation gap
    exceeds ``gap_threshold``, effective otherwise."""
    if r2_validation < 0:
        return "underperforming"
    if r2_test - r2_validation > gap_threshold:
        return "degrading"
    return "effective"


def evaluate_experiment(model, features, targets, plan, *, trained_cells=None,
                        baseline: str = "eval_mean") -> EvalResult:
    """Score ``model`` on the plan's test cells and on every validation-year cell.

    Cells absent from either the feature or the target table are skipped.
    ``trained_cells`` defaults to the plan's training cells; any overlap with
    an evaluated cell raises :class:`LeakageDetected`.
    """
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}")
    trained = set(plan.train_cells if trained_cells is None else map(tuple, trained_cells))
    f_index = features.row_index()
    t_index = {k: i for i, k in enumerate(targets.keys)}
    available = [k for k in features.keys if k in t_index]
    test = [c for c in sorted(plan.test_cells) if c in f_index and c in t_index]
    val_years = set(plan.validation_years)
    validation = [c for c in available if c[1] in val_years]

    leaked = trained & (set(test) | set(validation))
    if leaked:
        raise LeakageDetected(f"{len(leaked)} evaluated cells were used for training, e.g. {sorted(leaked)[0]}")
    if len(test) < 2 or len(validation) < 2:
        raise MissingCells(f"too few evaluable cells (test={len(test)}, validation={len(validation)})")

    train_mean = None
    if baseline == "train_mean":
        train = [c for c in trained if c in t_index]
        train_mean = float(np.mean([targets.values[t_index[c]] for c in train]))

    def score(cells):
        X = features.values[[f_index[c] for c in cells]]
        y = targets.values[[t_index[c] for c in cells]]
        yhat = model.predict(X)
        return r2(y, yhat, train_mean), rmse(y, yhat)

    r2_test, rmse_test = score(test)
    r2_val, rmse_val = score(validation)
    return EvalResult(r2_test, r2_val, rmse_test, rmse_val, len(test), len(validation), baseline)


def pearson(x, y) -> float | None:
    """Correlation, or None when it is undefined (n < 2 or a constant input)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    c = float(np.corrcoef(x, y)[0, 1])
    return None if math.isnan(c) else c
