import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agroval.errors import ConfigInvalid, EmptyPool, LeakageDetected, TooFewYears, YearNotInPanel
from agroval.ingest import YieldPanel
from agroval.splits import SplitPlan, expanding_window_folds, make_split_plan, select_validation_years


def grid_cells(n_regions=100, years=range(2000, 2023)):
    return [(f"R{i:03d}", t) for i in range(n_regions) for t in years]


def test_test_size_and_disjointness():
    plan = make_split_plan(grid_cells(), (2004, 2018), (2000, 2022), 0.1, seed=3)
    assert len(plan.test_cells) == 210
    assert len(plan.train_cells) == 2100 - 210
    assert not plan.test_cells & plan.train_cells
    assert {t for _, t in plan.test_cells | plan.train_cells}.isdisjoint({2004, 2018})


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 2**63 - 1),
    st.integers(1, 40),
    st.floats(0.02, 0.9),
    st.sets(st.integers(1995, 2025), min_size=1, max_size=3),
)
def test_plan_invariants(seed, n_regions, frac, val_years):
    cells = grid_cells(n_regions, range(1995, 2026))
    pool = [c for c in cells if 2000 <= c[1] <= 2022 and c[1] not in val_years]
    if not pool:
        with pytest.raises(EmptyPool):
            make_split_plan(cells, sorted(val_years), (2000, 2022), frac, seed)
        return
    plan = make_split_plan(cells, sorted(val_years), (2000, 2022), frac, seed)
    assert len(plan.test_cells) == round(frac * len(pool))
    assert plan.test_cells | plan.train_cells == set(pool)
    assert not plan.test_cells & plan.train_cells
    for _, t in plan.test_cells | plan.train_cells:
        assert t not in val_years
    assert make_split_plan(cells, sorted(val_years), (2000, 2022), frac, seed) == plan


def test_seeds_differ_and_round_trip(tmp_path):
    a = make_split_plan(grid_cells(20), (2004, 2018), seed=1)
    b = make_split_plan(grid_cells(20), (2004, 2018), seed=2)
    assert a.test_cells != b.test_cells
    a.save(tmp_path / "plan.json")
    assert SplitPlan.load(tmp_path / "plan.json") == a


def test_errors():
    with pytest.raises(YearNotInPanel):
        make_split_plan(grid_cells(3), (1990,))
    with pytest.raises(EmptyPool):
        make_split_plan(grid_cells(3, range(2000, 2002)), (2000, 2001))
    with pytest.raises(ConfigInvalid):
        make_split_plan(grid_cells(3), (2004,), test_frac=1.0)


def test_check_detects_leakage():
    good = make_split_plan(grid_cells(5), (2004, 2018), seed=0)
    shared = next(iter(good.train_cells))
    bad = SplitPlan(good.validation_years, good.pool_years, good.test_cells | {shared}, good.train_cells, 0)
    with pytest.raises(LeakageDetected):
        bad.check()
    bad_val = SplitPlan(good.validation_years, good.pool_years, good.test_cells,
                        good.train_cells | {("R000", 2004)}, 0)
    with pytest.raises(LeakageDetected):
        bad_val.check()


def test_folds_example():
    folds = expanding_window_folds(range(2000, 2010), 3)
    assert [f[1] for f in folds] == [(2007,), (2008,), (2009,)]
    assert folds[0][0] == tuple(range(2000, 2007))
    assert folds[2][0] == tuple(range(2000, 2009))


def test_single_fold_and_step():
    assert expanding_window_folds(range(2000, 2010), 1) == [(tuple(range(2000, 2009)), (2009,))]
    folds = expanding_window_folds(range(2000, 2010), 2, step=2)
    assert [f[1] for f in folds] == [(2006, 2007), (2008, 2009)]


@settings(max_examples=60, deadline=None)
@given(st.sets(st.integers(1950, 2050), min_size=1, max_size=40), st.integers(1, 6), st.integers(1, 3))
def test_fold_properties(years, n_folds, step):
    ys = sorted(years)
    if len(ys) - n_folds * step < 1:
        with pytest.raises(TooFewYears):
            expanding_window_folds(ys, n_folds, step)
        return
    folds = expanding_window_folds(ys, n_folds, step)
    assert len(folds) == n_folds
    tested = [t for _, te in folds for t in te]
    assert tested == ys[-n_folds * step:]
    for train, test in folds:
        assert max(train) < min(test)
        assert train == tuple(ys[: len(train)])


def test_too_few_years():
    with pytest.raises(TooFewYears):
        expanding_window_folds([2000, 2001, 2002], 3)


def test_auto_validation_years():
    shocks = {2007: 1.5, 2012: -2.0}
    recs = [(r, t, 6.0 + 0.05 * (t - 2000) + shocks.get(t, 0.0)) for r in "ABC" for t in range(1990, 2023)]
    y = YieldPanel.from_records(recs)
    assert select_validation_years(y, "auto") == (2007, 2012)
    assert select_validation_years(y, [2018, 2004]) == (2004, 2018)
    with pytest.raises(YearNotInPanel):
        select_validation_years(y, [1980])


def test_auto_ties_pick_earliest():
    y = YieldPanel.from_records([(r, t, 5.0) for r in "AB" for t in range(2000, 2010)])
    hi_lo = select_validation_years(y, "auto")
    assert len(hi_lo) == 2 and hi_lo[0] == 2000


def test_auto_needs_three_years():
    y = YieldPanel.from_records([("A", 2000, 5.0), ("A", 2001, 6.0)])
    with pytest.raises(TooFewYears):
        select_validation_years(y, "auto")


def test_many_seeds_never_leak():
    cells = grid_cells(30)
    sizes = set()
    for seed in range(200):
        plan = make_split_plan(cells, (2004, 2018), seed=seed)
        plan.check()
        sizes.add(len(plan.test_cells))
    assert sizes == {round(0.1 * 30 * 21)}
