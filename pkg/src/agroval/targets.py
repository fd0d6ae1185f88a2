"""Prediction targets derived from the yield panel.

Everything starts from detrended yield: the national quadratic trend p(t)
is removed and its maximum over the fit window added back,

    y_det(r, t) = y(r, t) - p(t) + p_max.

From there the four target kinds are the detrended yield itself, the
absolute gap to the region's best detrended year, the percent deviation from
the region's mean (gap ratio, positive = above mean) and the percent anomaly
against a lagged rolling mean.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyRegionSeries,
    InsufficientYears,
    NonPositiveMean,
    YearOutsideTrend,
)
from .ingest import YieldPanel

TARGET_KINDS = ("yield", "gap_abs", "gap_ratio", "anomaly")
TARGET_UNITS = {"yield": "t/ha", "gap_abs": "t/ha", "gap_ratio": "%", "anomaly": "%"}


@dataclass(frozen=True)
class QuadraticTrend:
    """p(t) = a (t - t0)^2 + b (t - t0) + c, with t0 the centre of the fit window."""

    a: float
    b: float
    c: float
    window: tuple
    t0: float
    p_max: float

    def __call__(self, year):
        u = np.asarray(year, dtype=float) - self.t0
        return self.a * u * u + self.b * u + self.c

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "window": list(self.window),
                "t0": self.t0, "p_max": self.p_max}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticTrend":
        return cls(d["a"], d["b"], d["c"], tuple(d["window"]), d["t0"], d["p_max"])


def national_means(y: YieldPanel, window=None) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted mean across available regions for each year."""
    years = y.year_array()
    values = np.asarray(y.values)
    if window is not None:
        keep = (years >= window[0]) & (years <= window[1])
        years, values = years[keep], values[keep]
    uniq = np.unique(years)
    means = np.array([values[years == t].mean() for t in uniq])
    return uniq, means


def fit_national_trend(y: YieldPanel, window=None) -> QuadraticTrend:
    """Least-squares quadratic through the national mean yield per year."""
    if window is None:
        window = (min(y.years), max(y.years)) if len(y) else (0, 0)
    window = (int(window[0]), int(window[1]))
    years, means = national_means(y, window)
    if len(years) < 3:
        raise InsufficientYears(f"need >= 3 distinct years to fit a quadratic, got {len(years)}")
    t0 = (window[0] + window[1]) / 2.0
    u = years - t0
    design = np.column_stack([u * u, u, np.ones_like(u)])
    (a, b, c), *_ = np.linalg.lstsq(design, means, rcond=None)
    grid = np.arange(window[0], window[1] + 1) - t0
    p_max = float(np.max(a * grid * grid + b * grid + c))
    return QuadraticTrend(float(a), float(b), float(c), window, t0, p_max)


def detrend(y: YieldPanel, trend: QuadraticTrend) -> YieldPanel:
    years = y.year_array()
    if len(years) and (years.min() < trend.window[0] or years.max() > trend.window[1]):
        raise YearOutsideTrend(
            f"panel years {years.min()}-{years.max()} exceed trend window {trend.window}"
        )
    return y.replace_values(np.asarray(y.values) - trend(years) + trend.p_max)


@dataclass(frozen=True)
class TargetTable:
    kind: str
    keys: tuple
    values: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.keys)

    def lookup(self) -> dict:
        return {k: float(v) for k, v in zip(self.keys, self.values)}

    def select(self, cells) -> np.ndarray:
        index = {k: i for i, k in enumerate(self.keys)}
        return np.array([self.values[index[tuple(c)]] for c in cells], dtype=float)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "year", "kind", "value"])
            for (region, year), v in zip(self.keys, self.values):
                w.writerow([region, year, self.kind, repr(float(v))])

    def write_trend_json(self, path) -> None:
        trend = self.provenance.get("trend")
        Path(path).write_text(json.dumps(trend, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _by_region(det: YieldPanel) -> dict:
    out = {}
    for i, (region, year) in enumerate(det.keys):
        out.setdefault(region, []).append((year, float(det.values[i])))
    return out


def _window_values(series, window):
    if window is None:
        return [v for _, v in series]
    return [v for t, v in series if window[0] <= t <= window[1]]


def yield_gap_abs(det: YieldPanel, window=None) -> TargetTable:
    """Region's best detrended yield in ``window`` minus each year's detrended yield."""
    keys, values = [], []
    for region, series in _by_region(det).items():
        ref = _window_values(series, window)
        if not ref:
            raise EmptyRegionSeries(f"region {region!r} has no detrended yields in window {window}")
        best = max(ref)
        for year, v in series:
            keys.append((region, year))
            values.append(max(best - v, 0.0))
    return TargetTable("gap_abs", tuple(keys), np.array(values),
                       {"window": list(window) if window else None})


def yield_gap_ratio(det: YieldPanel, window=None) -> TargetTable:
    """100 * (y_det - window mean) / window mean, per region."""
    keys, values = [], []
    for region, series in _by_region(det).items():
        ref = _window_values(series, window)
        if not ref:
            raise EmptyRegionSeries(f"region {region!r} has no detrended yields in window {window}")
        mean = float(np.mean(ref))
        if mean <= 0:
            raise NonPositiveMean(f"region {region!r} mean detrended yield is {mean}")
        for year, v in series:
            keys.append((region, year))
            values.append(100.0 * (v - mean) / mean)
    return TargetTable("gap_ratio", tuple(keys), np.array(values),
                       {"window": list(window) if window else None, "sign": "positive = above mean"})


def yield_anomaly(det: YieldPanel, lag: int = 2, window: int = 10, min_window_years: int = 7) -> TargetTable:
    """Percent deviation from the mean of years t-lag-window+1 .. t-lag.

    Rows whose lagged window holds fewer than ``min_window_years`` values are
    dropped and counted in ``TargetTable.dropped``.
    """
    keys, values = [], []
    dropped = 0
    for region, series in _by_region(det).items():
        lookup = dict(series)
        for year, v in series:
            hist = [lookup[t] for t in range(year - lag - window + 1, year - lag + 1) if t in lookup]
            if len(hist) < min_window_years:
                dropped += 1
                continue
            m = float(np.mean(hist))
            keys.append((region, year))
            values.append(100.0 * (v - m) / m)
    return TargetTable("anomaly", tuple(keys), np.array(values),
                       {"lag": lag, "window": window, "min_window_years": min_window_years},
                       dropped=dropped)


@dataclass(frozen=True)
class TargetConfig:
    trend_window: tuple | None = None
    gap_window: tuple | None = None
    anomaly_lag: int = 2
    anomaly_window: int = 10
    min_window_years: int = 7


def build_target_table(y: YieldPanel, kind: str, config: TargetConfig | None = None) -> TargetTable:
    """fit_national_trend -> detrend -> the kind-specific computation."""
    if kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {kind!r}; expected one of {TARGET_KINDS}")
    config = config or TargetConfig()
    trend = fit_national_trend(y, config.trend_window)
    det = detrend(y, trend)
    if kind == "yield":
        table = TargetTable("yield", det.keys, np.asarray(det.values), {})
    elif kind == "gap_abs":
        table = yield_gap_abs(det, config.gap_window)
    elif kind == "gap_ratio":
        table = yield_gap_ratio(det, config.gap_window)
    else:
        table = yield_anomaly(det, config.anomaly_lag, config.anomaly_window, config.min_window_years)
    prov = {**table.provenance, "trend": trend.to_dict(), "units": TARGET_UNITS[kind]}
    return TargetTable(kind, table.keys, table.values, prov, table.dropped)
