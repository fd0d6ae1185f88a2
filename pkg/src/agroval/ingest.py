"""Regional weather and yield panels: CSV loading, writing and cross-checks.

The weather CSV carries one row per (region, day)::

    region,date,tmean,tmax,tmin,precip,wind,radiation,rhum

and the yield CSV one row per (region, year) with either ``yield_t_ha`` or
``yield_kg_ha`` as the value column.  Yields are held in t/ha internally.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    DateGap,
    DuplicateRecord,
    InvariantViolation,
    MalformedRow,
    NonPositiveYield,
)

WEATHER_VARS = ("tmean", "tmax", "tmin", "precip", "wind", "radiation", "rhum")
WEATHER_HEADER = ("region", "date") + WEATHER_VARS
YIELD_HEADER_T = ("region", "year", "yield_t_ha")
YIELD_HEADER_KG = ("region", "year", "yield_kg_ha")

Cell = tuple  # (region, year)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WeatherPanel:
    """Daily weather for a set of regions over one shared, gap-free date range.

    ``data[var]`` has shape ``(n_regions, n_days)``; row order follows
    ``regions``.
    """

    regions: tuple
    dates: np.ndarray
    data: Mapping[str, np.ndarray]

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "dates", _frozen(dates))
        shape = (len(self.regions), len(dates))
        data = {}
        for var in WEATHER_VARS:
            if var not in self.data:
                raise InvariantViolation(f"weather variable {var!r} missing")
            arr = np.asarray(self.data[var], dtype=float)
            if arr.shape != shape:
                raise InvariantViolation(f"{var}: expected shape {shape}, got {arr.shape}")
            data[var] = _frozen(arr)
        object.__setattr__(self, "data", data)
        check_weather_invariants(self)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def years(self) -> np.ndarray:
        return self.dates.astype("datetime64[Y]").astype(int) + 1970

    @property
    def year_range(self) -> tuple[int, int]:
        y = self.years
        return int(y[0]), int(y[-1])

    def region_index(self, region: str) -> int:
        return self.regions.index(region)

    def series(self, region: str, var: str) -> np.ndarray:
        return self.data[var][self.region_index(region)]


def check_weather_invariants(panel: WeatherPanel) -> None:
    """Raise :class:`InvariantViolation` on the first broken physical rule."""
    if len(panel.regions) == 0:
        raise InvariantViolation("weather panel has no regions")
    if len(set(panel.regions)) != len(panel.regions):
        raise InvariantViolation("duplicate region ids in weather panel")
    if any(not r for r in panel.regions):
        raise InvariantViolation("empty region id")
    if len(panel.dates) > 1 and np.any(np.diff(panel.dates.astype(int)) != 1):
        raise InvariantViolation("weather dates are not contiguous")
    d = panel.data
    rules = (
        ("tmin <= tmean", d["tmin"] <= d["tmean"]),
        ("tmean <= tmax", d["tmean"] <= d["tmax"]),
        ("precip >= 0", d["precip"] >= 0),
        ("wind >= 0", d["wind"] >= 0),
        ("radiation >= 0", d["radiation"] >= 0),
        ("0 <= rhum <= 100", (d["rhum"] >= 0) & (d["rhum"] <= 100)),
    )
    for name, ok in rules:
        if not np.all(ok):
            r, t = np.argwhere(~ok)[0]
            raise InvariantViolation(
                f"{name} violated for region {panel.regions[r]!r} on {panel.dates[t]}"
            )


def _row_invariants(v: dict) -> str | None:
    if not v["tmin"] <= v["tmean"] <= v["tmax"]:
        return "tmin <= tmean <= tmax"
    if v["precip"] < 0:
        return "precip >= 0"
    if v["wind"] < 0:
        return "wind >= 0"
    if v["radiation"] < 0:
        return "radiation >= 0"
    if not 0 <= v["rhum"] <= 100:
        return "0 <= rhum <= 100"
    return None


def _parse_float(raw: str, line: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRow(line, column, f"not a number: {raw!r}") from None
    if not np.isfinite(value):
        raise MalformedRow(line, column, f"non-finite value: {raw!r}")
    return value


def load_weather_csv(path) -> WeatherPanel:
    """Parse a weather CSV, checking each row and per-region date contiguity."""
    path = Path(path)
    rows_by_region: dict[str, dict] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != WEATHER_HEADER:
            raise MalformedRow(1, "header", f"expected {','.join(WEATHER_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(WEATHER_HEADER):
                raise MalformedRow(line, "row", f"expected {len(WEATHER_HEADER)} fields, got {len(row)}")
            region = row[0].strip()
            if not region:
                raise MalformedRow(line, "region", "empty region id")
            try:
                day = dt.date.fromisoformat(row[1].strip())
            except ValueError:
                raise MalformedRow(line, "date", f"not an ISO date: {row[1]!r}") from None
            values = {var: _parse_float(raw, line, var) for var, raw in zip(WEATHER_VARS, row[2:])}
            broken = _row_invariants(values)
            if broken:
                raise InvariantViolation(f"line {line}: {broken} violated ({region}, {day})")
            days = rows_by_region.setdefault(region, {})
            if day in days:
                raise InvariantViolation(f"line {line}: duplicate date {day} for region {region!r}")
            days[day] = values

    if not rows_by_region:
        raise MalformedRow(2, "row", "no data rows")

    regions = tuple(rows_by_region)
    span = None
    for region, days in rows_by_region.items():
        ordered = sorted(days)
        expected = ordered[0]
        for day in ordered:
            if day != expected:
                raise DateGap(region, expected)
            expected = day + dt.timedelta(days=1)
        if span is None:
            span = (ordered[0], ordered[-1])
        elif (ordered[0], ordered[-1]) != span:
            raise InvariantViolation(
                f"region {region!r} covers {ordered[0]}..{ordered[-1]}, expected {span[0]}..{span[1]}"
            )

    dates = np.arange(np.datetime64(span[0]), np.datetime64(span[1]) + 1, dtype="datetime64[D]")
    data = {var: np.empty((len(regions), len(dates))) for var in WEATHER_VARS}
    for i, region in enumerate(regions):
        days = rows_by_region[region]
        for j, day in enumerate(sorted(days)):
            vals = days[day]
            for var in WEATHER_VARS:
                data[var][i, j] = vals[var]
    return WeatherPanel(regions, dates, data)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_weather_csv(panel: WeatherPanel, path) -> None:
    """Write the canonical form: panel region order, ascending dates, shortest-repr floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    date_str = [str(d) for d in panel.dates]
    cols = [panel.data[v] for v in WEATHER_VARS]
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(WEATHER_HEADER) + "\n")
        for i, region in enumerate(panel.regions):
            lines = []
            for j, ds in enumerate(date_str):
                lines.append(region + "," + ds + "," + ",".join(_fmt(c[i, j]) for c in cols) + "\n")
            fh.writelines(lines)


@dataclass(frozen=True, eq=False)
class YieldPanel:
    """Sparse (region, year) -> yield [t/ha] table, keys kept sorted."""

    keys: tuple
    values: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        keys = tuple((str(r), int(y)) for r, y in self.keys)
        values = np.asarray(self.values, dtype=float)
        if len(keys) != len(values):
            raise InvariantViolation("keys and values differ in length")
        order = sorted(range(len(keys)), key=keys.__getitem__)
        keys = tuple(keys[i] for i in order)
        values = values[order] if len(order) else values
        index = {}
        for i, k in enumerate(keys):
            if k in index:
                raise DuplicateRecord(f"duplicate yield record for {k}")
            index[k] = i
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_records(cls, records: Iterable[tuple]) -> "YieldPanel":
        records = list(records)
        for region, year, value in records:
            if not value > 0:
                raise NonPositiveYield(f"yield for ({region}, {year}) is {value}, must be > 0")
        return cls([(r, y) for r, y, _ in records], [v for _, _, v in records])

    def __len__(self) -> int:
        return len(self.keys)

    def __eq__(self, other) -> bool:
        if not isinstance(other, YieldPanel):
            return NotImplemented
        return self.keys == other.keys and np.array_equal(self.values, other.values)

    __hash__ = None

    def __contains__(self, cell) -> bool:
        return tuple(cell) in self._index

    def get(self, region: str, year: int, default=None):
        i = self._index.get((region, int(year)))
        return default if i is None else float(self.values[i])

    @property
    def regions(self) -> tuple:
        return tuple(sorted({r for r, _ in self.keys}))

    @property
    def years(self) -> tuple:
        return tuple(sorted({y for _, y in self.keys}))

    def region_series(self, region: str) -> tuple[np.ndarray, np.ndarray]:
        idx = [i for i, (r, _) in enumerate(self.keys) if r == region]
        return np.array([self.keys[i][1] for i in idx], dtype=int), self.values[idx]

    def year_array(self) -> np.ndarray:
        return np.array([y for _, y in self.keys], dtype=int)

    def region_array(self) -> np.ndarray:
        return np.array([r for r, _ in self.keys], dtype=object)

    def subset(self, cells) -> "YieldPanel":
        cells = {(str(r), int(y)) for r, y in cells}
        idx = [i for i, k in enumerate(self.keys) if k in cells]
        return YieldPanel([self.keys[i] for i in idx], self.values[idx])

    def replace_values(self, values) -> "YieldPanel":
        return YieldPanel(self.keys, values)


def load_yield_csv(path) -> YieldPanel:
    path = Path(path)
    records = []
    seen = set()
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        header = tuple(h.strip() for h in header) if header else None
        if header == YIELD_HEADER_T:
            factor = 1.0
        elif header == YIELD_HEADER_KG:
            factor = 1e-3
        else:
            raise MalformedRow(1, "header", "expected region,year,yield_t_ha (or yield_kg_ha)")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(line, "row", f"expected 3 fields, got {len(row)}")
            region = row[0].strip()
            if not region:
                raise MalformedRow(line, "region", "empty region id")
            try:
                year = int(row[1])
            except ValueError:
                raise MalformedRow(line, "year", f"not an integer: {row[1]!r}") from None
            value = _parse_float(row[2], line, header[2])
            if value <= 0:
                raise NonPositiveYield(f"line {line}: yield {value} for ({region}, {year}) must be > 0")
            if (region, year) in seen:
                raise DuplicateRecord(f"line {line}: duplicate record ({region}, {year})")
            seen.add((region, year))
            records.append((region, year, value * factor))
    return YieldPanel.from_records(records)


def write_yield_csv(panel: YieldPanel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(YIELD_HEADER_T) + "\n")
        for (region, year), value in zip(panel.keys, panel.values):
            fh.write(f"{region},{year},{_fmt(value)}\n")


@dataclass(frozen=True)
class ValidationReport:
    weather_missing: tuple  # regions with yield data but no weather
    yield_missing: tuple  # regions with weather but no yield data
    year_coverage: Mapping[str, tuple]  # region -> (first, last, n_years)
    missing_fraction: float
    years_outside_weather: tuple

    @property
    def mismatches(self) -> list:
        return [(r, "weather-missing") for r in self.weather_missing] + [
            (r, "yield-missing") for r in self.yield_missing
        ]

    @property
    def errors(self) -> list:
        out = [f"{r}: {kind}" for r, kind in self.mismatches]
        out += [f"yield year {y} outside weather range" for y in self.years_outside_weather]
        return out

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "weather_missing": list(self.weather_missing),
            "yield_missing": list(self.yield_missing),
            "missing_fraction": self.missing_fraction,
            "years_outside_weather": list(self.years_outside_weather),
            "year_coverage": {r: list(v) for r, v in self.year_coverage.items()},
        }


def validate_panels(weather: WeatherPanel, yields: YieldPanel) -> ValidationReport:
    """Cross-check region sets and yield coverage; never raises, never mutates.

    ``missing_fraction`` is taken over the grid of yield regions times the
    full span of yield years.
    """
    w_regions = set(weather.regions)
    y_regions = set(yields.regions)
    coverage = {}
    for region in sorted(y_regions):
        years, _ = yields.region_series(region)
        coverage[region] = (int(years.min()), int(years.max()), int(len(years)))
    if len(yields):
        first, last = yields.years[0], yields.years[-1]
        grid = len(y_regions) * (last - first + 1)
        missing = 1.0 - len(yields) / grid
        w_first, w_last = weather.year_range
        outside = tuple(y for y in yields.years if y < w_first or y > w_last)
    else:
        missing, outside = 1.0, ()
    return ValidationReport(
        weather_missing=tuple(sorted(y_regions - w_regions)),
        yield_missing=tuple(sorted(w_regions - y_regions)),
        year_coverage=coverage,
        missing_fraction=float(missing),
        years_outside_weather=outside,
    )
