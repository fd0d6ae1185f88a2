import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agroval.errors import Empty, LeakageDetected, LengthMismatch, MissingCells, ZeroVariance
from agroval.evaluate import classify_model, evaluate_experiment, pearson, r2, rmse
from agroval.indicators.features import FeatureTable
from agroval.splits import SplitPlan
from agroval.targets import TargetTable


def r2_oracle(y, yhat, mean=None):
    m = sum(y) / len(y) if mean is None else mean
    ss_res = sum((a - b) ** 2 for a, b in zip(y, yhat))
    ss_tot = sum((a - m) ** 2 for a in y)
    return 1 - ss_res / ss_tot


def test_examples():
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))
    assert r2([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5)
    assert r2([1, 2, 3], [1, 2, 3]) == 1.0
    assert r2([1, 2, 3], [2, 2, 2]) == 0.0
    assert r2([1, 2, 3], [2, 2, 2], baseline_mean=0.0) == pytest.approx(1 - 2 / 14)


def test_matches_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(2, 50))
        y = rng.normal(size=n)
        yhat = y + rng.normal(size=n)
        assert abs(r2(y, yhat) - r2_oracle(list(y), list(yhat))) < 1e-12


def test_errors():
    with pytest.raises(LengthMismatch):
        rmse([1, 2], [1])
    with pytest.raises(Empty):
        rmse([], [])
    with pytest.raises(Empty):
        r2([1.0], [1.0])
    with pytest.raises(ZeroVariance):
        r2([2, 2, 2], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50), st.floats(-100, 100))
def test_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=30)
    yhat = y + rng.normal(size=30)
    assert r2(a * y + b, a * yhat + b) == pytest.approx(r2(y, yhat), abs=1e-9)
    assert rmse(y, yhat) ** 2 * 30 == pytest.approx(np.sum((y - yhat) ** 2))
    assert r2(y, yhat) <= 1.0


def test_classify_examples():
    assert classify_model(0.8, -0.2) == "underperforming"
    assert classify_model(0.8, 0.75) == "effective"
    assert classify_model(0.8, 0.3) == "degrading"
    assert classify_model(0.7, 0.6) == "effective"
    assert classify_model(0.7, 0.3) == "degrading"
    assert classify_model(0.7, -0.1) == "underperforming"
    assert classify_model(0.5, 0.3) == "effective"
    assert classify_model(0.5, 0.3, gap_threshold=0.1) == "degrading"
    assert classify_model(-0.2, -0.1) == "underperforming"


def test_pearson():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1], [2]) is None
    assert pearson([1, 1, 1], [1, 2, 3]) is None


class Identity:
    def predict(self, X):
        return np.asarray(X)[:, 0]


def fixture_tables():
    keys = tuple((r, t) for r in "AB" for t in range(2000, 2006))
    truth = np.arange(len(keys), dtype=float)
    noisy = truth + np.where(np.arange(len(keys)) % 2 == 0, 0.5, -0.5)
    features = FeatureTable("t", keys, ("x",), noisy[:, None])
    targets = TargetTable(keys=keys, values=truth, kind="yield")
    plan = SplitPlan((2005,), (2000, 2004), frozenset({("A", 2000), ("B", 2001), ("B", 2004)}),
                     frozenset({("A", 2001), ("A", 2002), ("A", 2003), ("A", 2004), ("B", 2000), ("B", 2002),
                                ("B", 2003)}), 0)
    return features, targets, plan, truth, noisy


def test_evaluate_experiment_scores():
    features, targets, plan, truth, noisy = fixture_tables()
    res = evaluate_experiment(Identity(), features, targets, plan)
    idx = {k: i for i, k in enumerate(features.keys)}
    test = sorted(plan.test_cells)
    y = [truth[idx[c]] for c in test]
    p = [noisy[idx[c]] for c in test]
    assert res.r2_test == pytest.approx(r2_oracle(y, p))
    assert res.rmse_test == pytest.approx(0.5)
    assert res.n_test == 3 and res.n_validation == 2
    val = [idx[("A", 2005)], idx[("B", 2005)]]
    assert res.r2_validation == pytest.approx(r2_oracle(list(truth[val]), list(noisy[val])))


def test_train_mean_baseline():
    features, targets, plan, truth, noisy = fixture_tables()
    res = evaluate_experiment(Identity(), features, targets, plan, baseline="train_mean")
    idx = {k: i for i, k in enumerate(features.keys)}
    train_mean = float(np.mean([truth[idx[c]] for c in plan.train_cells]))
    test = sorted(plan.test_cells)
    expected = r2_oracle([truth[idx[c]] for c in test], [noisy[idx[c]] for c in test], train_mean)
    assert res.r2_test == pytest.approx(expected)
    assert res.baseline == "train_mean"


def test_leakage_and_missing():
    features, targets, plan, _, _ = fixture_tables()
    with pytest.raises(LeakageDetected):
        evaluate_experiment(Identity(), features, targets, plan, trained_cells=[("A", 2005)])
    with pytest.raises(LeakageDetected):
        evaluate_experiment(Identity(), features, targets, plan, trained_cells=[("A", 2000)])
    short = SplitPlan((2005,), (2000, 2004), frozenset({("A", 2000)}), frozenset(), 0)
    with pytest.raises(MissingCells):
        evaluate_experiment(Identity(), features, targets, short)
    with pytest.raises(ValueError):
        evaluate_experiment(Identity(), features, targets, plan, baseline="median")
