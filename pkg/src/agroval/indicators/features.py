"""Feature specs and the (region, year) feature table builder."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigInvalid, NoRowsEmitted, UnknownIndicator
from ..ingest import WeatherPanel, YieldPanel
from ..targets import detrend, fit_national_trend
from .calendar import aggregate
from .extremes import (
    count_threshold_days,
    gewitter_days,
    percentile_threshold_days,
    wechselfrost_days,
)
from .pet import day_of_year, pet_penman_monteith
from .standardized import quarterly_sample, spei, spi

REGION_MEAN_YIELD = "region_mean_yield"

# indicator -> (default statistic, units)
AGGREGATES = {
    "tmean": ("mean", "degC"),
    "tmax": ("mean", "degC"),
    "tmin": ("mean", "degC"),
    "precip": ("sum", "mm"),
    "wind": ("mean", "m/s"),
    "radiation": ("mean", "MJ/m2/day"),
    "rhum": ("mean", "%"),
    "pet": ("sum", "mm"),
}
COUNTS = (
    "frost_days",
    "heat_days",
    "hot_days",
    "high_radiation_days",
    "precip_p99_days",
    "wind_p99_days",
    "wechselfrost_days",
    "gewitter_days",
)
STANDARDIZED = ("spi", "spei")
INDICATORS = tuple(AGGREGATES) + COUNTS + STANDARDIZED + (REGION_MEAN_YIELD,)

DEFAULT_THRESHOLDS = {
    "frost_tmin": 0.0,
    "heat_tmax": 30.0,
    "hot_percentile": 90.0,
    "high_radiation": 25.0,  # MJ/m2/day, i.e. 2500 J/cm2
    "precip_percentile": 99.0,
    "wind_percentile": 99.0,
    "gewitter_precip_min": 15.0,
    "gewitter_wind_percentile": 95.0,
    "latitude": 51.0,
    "elevation": 100.0,
}

_PERIOD_LETTER = {"weekly": "w", "monthly": "m", "quarterly": "q", "annual": "a"}


@dataclass(frozen=True)
class FeatureEntry:
    indicator: str
    period: str = "monthly"
    range: tuple = (1, 1)
    stat: str | None = None
    scale: int | None = None

    def __post_init__(self):
        indicator = self.indicator.lower()
        if indicator not in INDICATORS:
            raise UnknownIndicator(f"unknown indicator {self.indicator!r}")
        object.__setattr__(self, "indicator", indicator)
        object.__setattr__(self, "range", (int(self.range[0]), int(self.range[1])))
        if indicator != REGION_MEAN_YIELD:
            if self.period not in _PERIOD_LETTER:
                raise ConfigInvalid(f"unknown period {self.period!r}")
            if self.range[0] > self.range[1]:
                raise ConfigInvalid(f"empty ordinal range {self.range}")

    @property
    def effective_scale(self) -> int:
        # "quarterly" SPI/SPEI means a 3-month accumulation sampled at quarter ends
        if self.scale is not None:
            return int(self.scale)
        return 3 if self.period == "quarterly" else 1

    def column_names(self) -> list[str]:
        if self.indicator == REGION_MEAN_YIELD:
            return [REGION_MEAN_YIELD]
        base = self.indicator
        if self.indicator in AGGREGATES and self.stat and self.stat != AGGREGATES[base][0]:
            base = f"{base}_{self.stat}"
        default_scale = 3 if self.period == "quarterly" else 1
        if self.indicator in STANDARDIZED and self.effective_scale != default_scale:
            base = f"{base}{self.effective_scale}"
        letter = _PERIOD_LETTER[self.period]
        lo, hi = self.range
        return [f"{base}_{letter}{k}" for k in range(lo, hi + 1)]

    def units(self) -> str:
        if self.indicator == REGION_MEAN_YIELD:
            return "t/ha"
        if self.indicator in AGGREGATES:
            return AGGREGATES[self.indicator][1]
        if self.indicator in STANDARDIZED:
            return "1"
        return "days"

    def to_dict(self) -> dict:
        d = {"indicator": self.indicator, "period": self.period, "range": list(self.range)}
        if self.stat is not None:
            d["stat"] = self.stat
        if self.scale is not None:
            d["scale"] = self.scale
        return d


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    entries: tuple
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = tuple(e if isinstance(e, FeatureEntry) else FeatureEntry(**e) for e in self.entries)
        if not entries:
            raise ConfigInvalid(f"feature spec {self.name!r} has no entries")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "thresholds", {**DEFAULT_THRESHOLDS, **dict(self.thresholds)})
        names = self.column_names()
        if len(set(names)) != len(names):
            raise ConfigInvalid(f"feature spec {self.name!r} produces duplicate column names")

    def column_names(self) -> list[str]:
        return [c for e in self.entries for c in e.column_names()]

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        try:
            entries = [
                FeatureEntry(
                    indicator=e["indicator"],
                    period=e.get("period", "monthly"),
                    range=tuple(e.get("range", (1, 1))),
                    stat=e.get("stat"),
                    scale=e.get("scale"),
                )
                for e in d["entries"]
            ]
            return cls(d["name"], tuple(entries), d.get("thresholds", {}))
        except KeyError as exc:
            raise ConfigInvalid(f"feature spec missing field {exc}") from None

    def to_dict(self) -> dict:
        overrides = {k: v for k, v in self.thresholds.items() if DEFAULT_THRESHOLDS.get(k) != v}
        return {"name": self.name, "entries": [e.to_dict() for e in self.entries],
                "thresholds": overrides}


BUILTIN_SPECS = ("reference", "spi9", "tmean9m", "stack_monthly")


def load_feature_spec(source) -> FeatureSpec:
    """Load a spec from a JSON path, or by name from the shipped fixtures."""
    path = Path(source)
    if path.is_file():
        return FeatureSpec.from_dict(json.loads(path.read_text(encoding="utf-8")))
    name = path.stem if path.suffix == ".json" else str(source)
    if name in BUILTIN_SPECS and not path.parent.name:
        text = resources.files("agroval.fixtures").joinpath(f"{name}.json").read_text(encoding="utf-8")
        return FeatureSpec.from_dict(json.loads(text))
    raise FileNotFoundError(f"feature spec not found: {source}")


@dataclass(frozen=True)
class FeatureTable:
    spec_name: str
    keys: tuple
    columns: tuple
    values: np.ndarray
    column_meta: dict = field(default_factory=dict, compare=False)
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.keys)

    def row_index(self) -> dict:
        return {k: i for i, k in enumerate(self.keys)}

    def select(self, cells) -> np.ndarray:
        index = self.row_index()
        return self.values[[index[tuple(c)] for c in cells]]

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "year", *self.columns])
            for (region, year), row in zip(self.keys, self.values):
                w.writerow([region, year, *(repr(float(v)) for v in row)])


class _RegionIndicators:
    """Lazily computed, cached indicator series for one region."""

    def __init__(self, weather: WeatherPanel, region: str, thresholds: dict, reference):
        self.weather = weather
        self.region = region
        self.th = thresholds
        self.reference = reference
        self.dates = weather.dates
        self._cache = {}

    def var(self, name):
        if name == "pet":
            return self._pet()
        return self.weather.series(self.region, name)

    def _pet(self):
        if "pet_daily" not in self._cache:
            w = self.weather
            lat = self.th.get("latitudes", {}).get(self.region, self.th["latitude"])
            self._cache["pet_daily"] = pet_penman_monteith(
                self.var("tmean"), self.var("tmax"), self.var("tmin"), self.var("wind"),
                self.var("radiation"), self.var("rhum"), lat, day_of_year(w.dates), self.th["elevation"],
            )
        return self._cache["pet_daily"]

    def series(self, entry: FeatureEntry):
        key = (entry.indicator, entry.period, entry.stat, entry.effective_scale)
        if key not in self._cache:
            self._cache[key] = self._compute(entry).lookup()
        return self._cache[key]

    def _compute(self, e: FeatureEntry):
        th, d, kind, r = self.th, self.dates, e.period, self.region
        ind = e.indicator
        if ind in AGGREGATES:
            return aggregate(d, self.var(ind), kind, e.stat or AGGREGATES[ind][0], indicator=ind, region=r)
        if ind == "frost_days":
            return count_threshold_days(d, self.var("tmin"), "<", th["frost_tmin"], kind, indicator=ind, region=r)
        if ind == "heat_days":
            return count_threshold_days(d, self.var("tmax"), ">=", th["heat_tmax"], kind, indicator=ind, region=r)
        if ind == "high_radiation_days":
            return count_threshold_days(d, self.var("radiation"), ">", th["high_radiation"], kind,
                                        indicator=ind, region=r)
        if ind == "hot_days":
            return percentile_threshold_days(d, self.var("tmax"), th["hot_percentile"], self.reference,
                                             "above", kind, indicator=ind, region=r)
        if ind == "precip_p99_days":
            return percentile_threshold_days(d, self.var("precip"), th["precip_percentile"], self.reference,
                                             "above", kind, indicator=ind, region=r)
        if ind == "wind_p99_days":
            return percentile_threshold_days(d, self.var("wind"), th["wind_percentile"], self.reference,
                                             "above", kind, indicator=ind, region=r)
        if ind == "wechselfrost_days":
            return wechselfrost_days(d, self.var("tmin"), self.var("tmax"), kind, region=r)
        if ind == "gewitter_days":
            return gewitter_days(d, self.var("precip"), self.var("wind"), kind, th["gewitter_precip_min"],
                                 th["gewitter_wind_percentile"], self.reference, region=r)
        if ind in STANDARDIZED:
            daily = self.var("precip") if ind == "spi" else self.var("precip") - self._pet()
            monthly = aggregate(d, daily, "monthly", "sum", region=r)
            fn = spi if ind == "spi" else spei
            out = fn(monthly, e.effective_scale, self.reference)
            if kind == "quarterly":
                return quarterly_sample(out)
            if kind != "monthly":
                raise ConfigInvalid(f"{ind} is only available monthly or quarterly")
            return out
        raise UnknownIndicator(f"unknown indicator {ind!r}")


def region_mean_yield(yields: YieldPanel, train_cells=None) -> dict:
    """Mean detrended yield per region over ``train_cells`` (all cells if None).

    The trend is fitted on the same subset so nothing outside it leaks in.
    """
    subset = yields if train_cells is None else yields.subset(train_cells)
    if len(subset) == 0:
        return {}
    det = detrend(subset, fit_national_trend(subset))
    sums: dict = {}
    for (region, _), v in zip(det.keys, det.values):
        s = sums.setdefault(region, [0.0, 0])
        s[0] += float(v)
        s[1] += 1
    return {r: s / n for r, (s, n) in sums.items()}


def build_feature_table(weather: WeatherPanel, yields: YieldPanel, spec: FeatureSpec, reference=None,
                        train_cells=None) -> FeatureTable:
    """One row per yield cell inside the weather range whose features are all defined.

    ``train_cells`` restricts the cells behind the region-mean-yield column;
    pass the split plan's training cells to keep held-out years out of it.
    """
    if reference is None:
        reference = weather.year_range
    th = spec.thresholds
    columns = spec.column_names()
    w_first, w_last = weather.year_range
    needs_weather = any(e.indicator != REGION_MEAN_YIELD for e in spec.entries)
    rmy = region_mean_yield(yields, train_cells) if any(
        e.indicator == REGION_MEAN_YIELD for e in spec.entries) else {}
    weather_regions = set(weather.regions)

    keys, rows, dropped = [], [], 0
    per_region = {}
    for region, year in yields.keys:
        if needs_weather and (region not in weather_regions or not w_first <= year <= w_last):
            dropped += 1
            continue
        if needs_weather and region not in per_region:
            per_region[region] = _RegionIndicators(weather, region, th, reference)
        row = []
        for e in spec.entries:
            if e.indicator == REGION_MEAN_YIELD:
                row.append(rmy.get(region, float("nan")))
                continue
            lookup = per_region[region].series(e)
            row.extend(lookup.get((year, k), float("nan")) for k in range(e.range[0], e.range[1] + 1))
        if not np.all(np.isfinite(row)):
            dropped += 1
            continue
        keys.append((region, year))
        rows.append(row)
    if not rows:
        raise NoRowsEmitted(f"feature spec {spec.name!r} produced no complete rows")
    meta = {}
    for e in spec.entries:
        for c in e.column_names():
            meta[c] = {"units": e.units(), "source": e.indicator}
    return FeatureTable(spec.name, tuple(keys), tuple(columns), np.array(rows, dtype=float), meta, dropped)
