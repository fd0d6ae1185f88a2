import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agroval.errors import EmptyRegionSeries, InsufficientYears, NonPositiveMean, YearOutsideTrend
from agroval.ingest import YieldPanel
from agroval.targets import (
    QuadraticTrend,
    TargetConfig,
    build_target_table,
    detrend,
    fit_national_trend,
    yield_anomaly,
    yield_gap_abs,
    yield_gap_ratio,
)


def panel(fn, regions=("A", "B", "C"), years=range(1979, 2023)):
    return YieldPanel.from_records([(r, t, fn(r, t)) for r in regions for t in years])


def normal_equations_oracle(years, means, t0):
    """Solve the 3x3 normal equations from explicit power sums."""
    u = np.asarray(years, float) - t0
    s = [np.sum(u**k) for k in range(5)]
    m = np.array([[s[4], s[3], s[2]], [s[3], s[2], s[1]], [s[2], s[1], s[0]]])
    rhs = np.array([np.sum(means * u**2), np.sum(means * u), np.sum(means)])
    return np.linalg.solve(m, rhs)


def test_exact_quadratic_recovered():
    t0 = (1979 + 2022) / 2
    y = panel(lambda r, t: 0.01 * (t - t0) ** 2 + 5.0)
    tr = fit_national_trend(y)
    assert tr.t0 == t0
    assert (tr.a, tr.b, tr.c) == pytest.approx((0.01, 0.0, 5.0), abs=1e-9)


def test_constant_national_mean():
    tr = fit_national_trend(panel(lambda r, t: 7.0))
    assert tr.a == pytest.approx(0.0, abs=1e-12)
    assert tr.b == pytest.approx(0.0, abs=1e-12)
    assert tr.c == pytest.approx(7.0, abs=1e-12)
    assert tr.p_max == pytest.approx(7.0, abs=1e-12)


def test_noisy_quadratic_matches_oracle(rng):
    noise = {(r, t): rng.normal(0, 0.4) for r in "ABCDE" for t in range(1979, 2023)}
    y = panel(lambda r, t: -0.002 * (t - 1979) ** 2 + 0.08 * (t - 1979) + 6 + noise[(r, t)], regions="ABCDE")
    tr = fit_national_trend(y)
    years = np.arange(1979, 2023)
    means = np.array([np.mean([y.get(r, t) for r in "ABCDE"]) for t in years])
    a, b, c = normal_equations_oracle(years, means, tr.t0)
    assert (tr.a, tr.b, tr.c) == pytest.approx((a, b, c), abs=1e-8)
    grid = np.arange(1979, 2023)
    assert tr.p_max == pytest.approx(np.max(a * (grid - tr.t0) ** 2 + b * (grid - tr.t0) + c), abs=1e-8)


def test_unbalanced_panel_uses_unweighted_year_means():
    recs = [("A", t, 5.0 + 0.1 * (t - 2000)) for t in range(2000, 2010)]
    recs += [("B", t, 9.0) for t in range(2000, 2003)]
    y = YieldPanel.from_records(recs)
    tr = fit_national_trend(y)
    years = np.arange(2000, 2010)
    means = np.array([np.mean([v for (r, tt), v in zip(y.keys, y.values) if tt == t]) for t in years])
    assert (tr.a, tr.b, tr.c) == pytest.approx(tuple(normal_equations_oracle(years, means, tr.t0)), abs=1e-9)


def test_insufficient_years():
    with pytest.raises(InsufficientYears):
        fit_national_trend(panel(lambda r, t: 7.0, years=[2000, 2001]))


def test_detrend_examples():
    tr = QuadraticTrend(0.0, 0.0, 6.5, (2000, 2010), 2005.0, 8.0)
    y = YieldPanel.from_records([("A", 2003, 6.0)])
    assert detrend(y, tr).get("A", 2003) == 7.5
    flat = QuadraticTrend(0.0, 0.0, 7.0, (2000, 2010), 2005.0, 7.0)
    y2 = panel(lambda r, t: 5 + (t % 3), years=range(2000, 2011))
    assert np.array_equal(detrend(y2, flat).values, y2.values)


def test_region_on_trend_becomes_constant():
    y = panel(lambda r, t: -0.003 * (t - 2000) ** 2 + 0.1 * (t - 2000) + 6.0)
    tr = fit_national_trend(y)
    det = detrend(y, tr)
    assert np.allclose(det.values, tr.p_max, atol=1e-9)


def test_detrend_outside_window():
    tr = QuadraticTrend(0.0, 0.0, 7.0, (2000, 2010), 2005.0, 7.0)
    with pytest.raises(YearOutsideTrend):
        detrend(YieldPanel.from_records([("A", 2011, 6.0)]), tr)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cross_region_difference_preserved_exactly(seed):
    rng = np.random.default_rng(seed)
    vals = {(r, t): float(rng.uniform(3, 10)) for r in "ABCD" for t in range(1990, 2010)}
    y = panel(lambda r, t: vals[(r, t)], regions="ABCD", years=range(1990, 2010))
    det = detrend(y, fit_national_trend(y))
    for t in range(1990, 2010):
        for r1, r2 in (("A", "B"), ("C", "D"), ("A", "D")):
            # both cells share p(t) and p_max, so the same float is subtracted from each
            shift1 = det.get(r1, t) - y.get(r1, t)
            shift2 = det.get(r2, t) - y.get(r2, t)
            assert shift1 == pytest.approx(shift2, abs=1e-12)
            assert (det.get(r1, t) - det.get(r2, t)) == pytest.approx(y.get(r1, t) - y.get(r2, t), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 20))
def test_constant_shift_absorbed(seed, c):
    rng = np.random.default_rng(seed)
    vals = {(r, t): float(rng.uniform(4, 10)) for r in "ABC" for t in range(1979, 2023)}
    y = panel(lambda r, t: vals[(r, t)])
    y_c = y.replace_values(y.values + c)
    d0 = detrend(y, fit_national_trend(y))
    d1 = detrend(y_c, fit_national_trend(y_c))
    assert np.max(np.abs((d1.values - d0.values) - c)) < 1e-9


def test_gap_abs_examples():
    det = YieldPanel.from_records([("A", 2000, 6.0), ("A", 2001, 7.0), ("A", 2002, 8.0)])
    assert list(yield_gap_abs(det).values) == [2.0, 1.0, 0.0]
    const = YieldPanel.from_records([("A", t, 5.0) for t in range(2000, 2010)])
    assert np.all(yield_gap_abs(const).values == 0.0)


def test_gap_abs_scan_max_oracle(rng):
    det = panel(lambda r, t: float(rng.uniform(4, 9)))
    table = yield_gap_abs(det)
    for region in det.regions:
        series = [det.get(region, t) for t in range(1979, 2023)]
        best = series[0]
        for v in series[1:]:
            best = v if v > best else best
        got = [table.lookup()[(region, t)] for t in range(1979, 2023)]
        assert got == [best - v for v in series]
        assert min(got) == 0.0


def test_gap_abs_window():
    det = YieldPanel.from_records([("A", 2000, 9.0), ("A", 2001, 6.0), ("A", 2002, 7.0)])
    assert list(yield_gap_abs(det, (2001, 2002)).values) == [0.0, 1.0, 0.0]
    with pytest.raises(EmptyRegionSeries):
        yield_gap_abs(det, (1990, 1995))


def test_gap_ratio_examples():
    det = YieldPanel.from_records([("A", 2000, 6.0), ("A", 2001, 8.0), ("A", 2002, 7.0)])
    vals = yield_gap_ratio(det).lookup()
    assert vals[("A", 2001)] == pytest.approx(14.2857142857, abs=1e-9)
    assert vals[("A", 2002)] == 0.0
    assert yield_gap_ratio(det).provenance["sign"] == "positive = above mean"


def test_gap_ratio_non_positive_mean():
    det = YieldPanel(keys=(("A", 2000), ("A", 2001)), values=np.array([-1.0, 0.5]))
    with pytest.raises(NonPositiveMean):
        yield_gap_ratio(det)


def test_anomaly_examples():
    recs = [("A", t, 5.0) for t in range(2000, 2010)] + [("A", 2011, 5.5), ("A", 2012, 5.0)]
    table = yield_anomaly(YieldPanel.from_records(recs))
    vals = table.lookup()
    assert vals[("A", 2011)] == pytest.approx(10.0, abs=1e-12)
    assert vals[("A", 2012)] == pytest.approx(0.0, abs=1e-12)


def anomaly_oracle(series, lag=2, window=10, min_years=7):
    out = {}
    for t, v in series.items():
        hist = [series[s] for s in series if t - lag - window + 1 <= s <= t - lag]
        if len(hist) >= min_years:
            m = sum(hist) / len(hist)
            out[t] = 100 * (v - m) / m
    return out


def test_anomaly_matches_window_oracle(rng):
    years = [t for t in range(1979, 2023) if rng.random() > 0.15]
    det = YieldPanel.from_records([("A", t, float(rng.uniform(5, 9))) for t in years])
    table = yield_anomaly(det)
    expected = anomaly_oracle(dict(zip(years, det.values)))
    got = {t: v for (_, t), v in zip(table.keys, table.values)}
    assert got.keys() == expected.keys()
    for t in got:
        assert got[t] == pytest.approx(expected[t], rel=1e-12)
    assert table.dropped == len(years) - len(expected)


def test_anomaly_first_row_on_full_panel():
    y = panel(lambda r, t: 6.0 + 0.01 * t % 1)
    table = build_target_table(y, "anomaly")
    # years t-11 .. t-2 must hold >= 7 values: the first such t is 1979 + 2 + 7 - 1
    assert min(t for _, t in table.keys) == 1987
    assert table.dropped == 3 * 8


def test_anomaly_no_trend_equals_raw(rng):
    vals = {(r, t): float(rng.uniform(5, 9)) for r in "AB" for t in range(1979, 2023)}
    raw = panel(lambda r, t: vals[(r, t)], regions="AB")
    flat = QuadraticTrend(0.0, 0.0, 7.0, (1979, 2022), 2000.5, 7.0)
    a = yield_anomaly(detrend(raw, flat))
    b = yield_anomaly(raw)
    assert a.keys == b.keys
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-12)


def test_stationary_envelopes(rng):
    vals = {(r, t): float(rng.normal(7.0, 0.35)) for r in "ABCDEFGH" for t in range(1979, 2023)}
    y = panel(lambda r, t: vals[(r, t)], regions="ABCDEFGH")
    anomaly = build_target_table(y, "anomaly").values
    assert abs(np.median(anomaly)) < 2.0
    assert np.mean(np.abs(anomaly) <= 10.0) > 0.9
    ratio = build_target_table(y, "gap_ratio").values
    assert np.all(np.abs(ratio) <= 30.0)


def test_build_target_table_dispatch_and_determinism(small_panels):
    _, y, _ = small_panels
    for kind in ("yield", "gap_abs", "gap_ratio", "anomaly"):
        a = build_target_table(y, kind)
        b = build_target_table(y, kind)
        assert a.keys == b.keys and np.array_equal(a.values, b.values)
        assert a.provenance["units"] == ("t/ha" if kind in ("yield", "gap_abs") else "%")
    det = detrend(y, fit_national_trend(y))
    assert np.array_equal(build_target_table(y, "yield").values, det.values)
    assert np.all(build_target_table(y, "gap_abs").values >= 0)
    with pytest.raises(ValueError):
        build_target_table(y, "profit")


def test_target_config_windows(small_panels):
    _, y, _ = small_panels
    t = build_target_table(y, "gap_abs", TargetConfig(gap_window=(1990, 2000)))
    assert t.provenance["window"] == [1990, 2000]


def test_target_exports(tmp_path, small_panels):
    _, y, _ = small_panels
    t = build_target_table(y, "gap_ratio")
    t.to_csv(tmp_path / "t.csv")
    t.write_trend_json(tmp_path / "trend.json")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "region,year,kind,value"
    import json

    trend = json.loads((tmp_path / "trend.json").read_text())
    assert set(trend) >= {"a", "b", "c", "window", "p_max"}
    assert QuadraticTrend.from_dict(trend).p_max == t.provenance["trend"]["p_max"]
