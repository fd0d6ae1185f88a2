import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agroval.errors import AllZeroImportance, EmptyRows, MissingCover, TooManyFeatures
from agroval.explain import (
    ShapSummary,
    brute_force_shap,
    shap_concentration,
    shap_summary,
    tree_expected_value,
    tree_shap,
    tree_shap_rows,
    write_shap_csv,
    write_summary_csv,
)
from agroval.models import fit_cart, fit_gbt, fit_random_forest
from agroval.models.ensemble import TreeEnsemble
from agroval.models.tree import Tree, _Builder


def random_tree(rng, d, depth):
    """A random tree with random covers (splits are not fit to any data)."""
    b = _Builder()

    def grow(level):
        if level == depth or (level > 0 and rng.random() < 0.2):
            return b.add_leaf(float(rng.normal()), 1, float(rng.uniform(0.5, 5.0)))
        node = b.add_internal(int(rng.integers(d)), float(rng.normal()), 0.0, 1, 0.0)
        b.left[node] = grow(level + 1)
        b.right[node] = grow(level + 1)
        b.cover[node] = b.cover[b.left[node]] + b.cover[b.right[node]]
        return node

    grow(0)
    return b.build()


def path_oracle(tree, x, d):
    """Shapley values from the permutation definition with cover-weighted expectations."""

    def value(node, s):
        if tree.feature[node] == -1:
            return tree.value[node]
        f = tree.feature[node]
        l, r = tree.left[node], tree.right[node]
        if f in s:
            return value(l if x[f] <= tree.threshold[node] else r, s)
        c = tree.cover[node]
        return (tree.cover[l] * value(l, s) + tree.cover[r] * value(r, s)) / c

    phi = np.zeros(d)
    import itertools

    for perm in itertools.permutations(range(d)):
        s = set()
        prev = value(0, s)
        for f in perm:
            s.add(f)
            cur = value(0, s)
            phi[f] += cur - prev
            prev = cur
    return phi / math.factorial(d)


def test_single_leaf():
    b = _Builder()
    b.add_leaf(4.2, 3)
    t = b.build()
    sv = tree_shap(t, [1.0, 2.0])
    assert np.all(sv.phi == 0) and sv.base_value == 4.2 and sv.prediction == 4.2


def test_one_feature_stump():
    b = _Builder()
    root = b.add_internal(0, 0.0, 0.0, 4, 4.0)
    b.left[root] = b.add_leaf(1.0, 1, 1.0)
    b.right[root] = b.add_leaf(5.0, 3, 3.0)
    t = b.build()
    assert tree_expected_value(t) == 4.0
    assert tree_shap(t, [-1.0]).phi[0] == pytest.approx(-3.0)
    assert tree_shap(t, [1.0]).phi[0] == pytest.approx(1.0)


def test_matches_permutation_oracle(rng):
    for _ in range(20):
        d = int(rng.integers(1, 5))
        t = random_tree(rng, d, int(rng.integers(1, 4)))
        x = rng.normal(size=d)
        assert np.allclose(tree_shap(t, x).phi, path_oracle(t, x, d), atol=1e-12)


def test_matches_brute_force(rng):
    for _ in range(50):
        d = int(rng.integers(1, 11))
        t = random_tree(rng, d, int(rng.integers(1, 5)))
        X = rng.normal(size=(10, d))
        phi = tree_shap_rows(TreeEnsemble("random_forest", (t,), [f"f{i}" for i in range(d)]), X).phi
        for i in range(10):
            assert np.max(np.abs(phi[i] - brute_force_shap(t, X[i]).phi)) < 1e-9


def test_symmetric_features():
    # x0 and x1 enter as a symmetric AND with equal covers
    b = _Builder()
    root = b.add_internal(0, 0.5, 0, 4, 4.0)
    lhs = b.add_leaf(0.0, 2, 2.0)
    rhs = b.add_internal(1, 0.5, 0, 2, 2.0)
    b.left[root], b.right[root] = lhs, rhs
    b.left[rhs] = b.add_leaf(0.0, 1, 1.0)
    b.right[rhs] = b.add_leaf(1.0, 1, 1.0)
    t = b.build()
    phi = tree_shap(t, [1.0, 1.0]).phi
    assert phi[0] == pytest.approx(phi[1])
    assert phi.sum() == pytest.approx(1.0 - 0.25)


def test_dummy_feature_gets_zero(rng):
    X = rng.normal(size=(100, 3))
    y = X[:, 0] + X[:, 2]
    t = fit_cart(X[:, [0, 2]], y, max_depth=4)
    sv = tree_shap(t, X[0, [0, 2]])
    # embed the tree in a 3-feature space where feature 1 is never used
    remap = np.where(t.feature == 1, 2, t.feature)
    t3 = Tree(remap, t.threshold, t.left, t.right, t.value, t.n_samples, t.cover)
    phi3 = tree_shap(t3, X[0]).phi
    assert phi3[1] == 0.0
    assert np.allclose(phi3[[0, 2]], sv.phi)


def test_repeated_feature_on_path(rng):
    X = rng.uniform(-1, 1, size=(200, 2))
    y = np.sin(3 * X[:, 0]) + 0.3 * X[:, 1]
    t = fit_cart(X, y, max_depth=6)
    assert len(t.used_features()) == 2
    for x in X[:10]:
        assert np.allclose(tree_shap(t, x).phi, brute_force_shap(t, x).phi, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_efficiency(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 8))
    t = random_tree(rng, d, int(rng.integers(1, 5)))
    x = rng.normal(size=d)
    sv = tree_shap(t, x)
    assert abs(sv.base_value + sv.phi.sum() - sv.prediction) < 1e-9


@pytest.mark.parametrize("kind", ["random_forest", "gbt"])
def test_ensembles_additive_and_accurate(rng, kind):
    X = rng.normal(size=(120, 4))
    y = X[:, 0] * 2 + X[:, 1] * X[:, 2] + rng.normal(size=120) * 0.1
    fit = fit_random_forest if kind == "random_forest" else fit_gbt
    m = fit(X, y, {"n_trees": 8, "max_depth": 4}, seed=2)
    rows = X[:25]
    mat = tree_shap_rows(m, rows)
    assert mat.local_accuracy_error() < 1e-9
    per_tree = sum(tree_shap_rows(TreeEnsemble(kind, (t,), m.feature_names, m.learning_rate, 0.0), rows).phi
                   for t in m.trees)
    expected = per_tree / len(m.trees) if kind == "random_forest" else per_tree
    assert np.allclose(mat.phi, expected, atol=1e-12)


def test_brute_force_background():
    b = _Builder()
    root = b.add_internal(0, 0.0, 0, 2, 2.0)
    b.left[root] = b.add_leaf(0.0, 1, 1.0)
    b.right[root] = b.add_leaf(10.0, 1, 1.0)
    t = b.build()
    sv = brute_force_shap(t, [1.0], background=np.array([[-1.0], [-1.0], [-1.0], [1.0]]))
    assert sv.base_value == pytest.approx(2.5)
    assert sv.phi[0] == pytest.approx(7.5)


def test_errors(rng):
    b = _Builder()
    root = b.add_internal(0, 0.0, 0, 2, 0.0)
    b.left[root] = b.add_leaf(0.0, 1, 0.0)
    b.right[root] = b.add_leaf(1.0, 1, 0.0)
    with pytest.raises(MissingCover):
        tree_shap(b.build(), [0.0])
    t = random_tree(rng, 3, 2)
    with pytest.raises(TooManyFeatures):
        brute_force_shap(t, np.zeros(16))
    m = fit_random_forest(rng.normal(size=(20, 2)), rng.normal(size=20), {"n_trees": 2})
    with pytest.raises(EmptyRows):
        shap_summary(m, np.zeros((0, 2)))


def test_summary_and_driver_ranking(rng):
    X = rng.normal(size=(300, 3))
    y = 3 * X[:, 1] + 0.2 * X[:, 0]
    m = fit_gbt(X, y, {"n_trees": 50, "max_depth": 3}, feature_names=["a", "b", "c"])
    s = shap_summary(m, X[:100], "m1")
    assert s.n_rows == 100 and s.model_id == "m1"
    assert int(np.argmax(s.mean_abs_phi)) == 1
    assert np.all(s.mean_abs_phi >= 0)
    assert set(s.as_dict()) == {"a", "b", "c"}
    one = shap_summary(m, X[0])
    assert np.allclose(one.mean_abs_phi, np.abs(tree_shap(m, X[0]).phi))


def test_constant_model_has_zero_importance(rng):
    m = fit_random_forest(rng.normal(size=(20, 2)), np.full(20, 1.0), {"n_trees": 3})
    s = shap_summary(m, rng.normal(size=(5, 2)))
    assert np.all(s.mean_abs_phi == 0)
    with pytest.raises(AllZeroImportance):
        shap_concentration(s)


def test_concentration_examples():
    c = shap_concentration(ShapSummary(("a", "b", "c"), np.array([0.5, 0.3, 0.2]), 1))
    assert c.hhi == pytest.approx(0.38) and c.top1_share == pytest.approx(0.5)
    assert shap_concentration(ShapSummary(tuple("abcd"), np.ones(4), 1)).hhi == pytest.approx(0.25)
    assert shap_concentration(ShapSummary(tuple("abc"), np.array([0.0, 2.0, 0.0]), 1)).hhi == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20).filter(lambda v: sum(v) > 1e-6))
def test_concentration_bounds(values):
    v = np.array(values)
    c = shap_concentration(ShapSummary(tuple(str(i) for i in range(len(v))), v, 1))
    assert 1 / len(v) - 1e-12 <= c.hhi <= 1 + 1e-12
    assert c.top1_share ** 2 <= c.hhi + 1e-12
    scaled = shap_concentration(ShapSummary(tuple(str(i) for i in range(len(v))), v * 7.0, 1))
    assert scaled.hhi == pytest.approx(c.hhi)


def test_csv_outputs(tmp_path, rng):
    X = rng.normal(size=(30, 2))
    m = fit_gbt(X, X[:, 0], {"n_trees": 5}, feature_names=["a", "b"])
    mat = tree_shap_rows(m, X[:3])
    write_shap_csv(tmp_path / "s.csv", "m", [("R", 2000), ("R", 2001), ("S", 2000)], mat)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "model_id,region,year,feature,phi,base_value"
    assert len(lines) == 1 + 3 * 2
    write_summary_csv(tmp_path / "sum.csv", shap_summary(m, X, "m"))
    assert (tmp_path / "sum.csv").read_text().splitlines()[0] == "model_id,feature,mean_abs_phi"
