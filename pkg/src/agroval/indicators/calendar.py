"""Period bookkeeping and daily -> period aggregation.

Weeks are ISO weeks (keyed by ISO year), months and quarters are calendar
periods.  Only complete periods are emitted; a contiguous daily series can
only be incomplete at its head and tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySeries, InvariantViolation, LengthMismatch

PERIOD_KINDS = ("weekly", "monthly", "quarterly", "annual")
_MAX_ORDINAL = {"weekly": 53, "monthly": 12, "quarterly": 4, "annual": 1}
STATS = ("mean", "sum", "min", "max")


@dataclass(frozen=True)
class Period:
    kind: str
    year: int
    ordinal: int

    def __post_init__(self):
        if self.kind not in _MAX_ORDINAL:
            raise ValueError(f"unknown period kind {self.kind!r}")
        if not 1 <= self.ordinal <= _MAX_ORDINAL[self.kind]:
            raise ValueError(f"{self.kind} ordinal {self.ordinal} out of range")


@dataclass(frozen=True)
class IndicatorSeries:
    """One value per complete period for one region and indicator."""

    indicator: str
    period_kind: str
    years: np.ndarray
    ordinals: np.ndarray
    values: np.ndarray
    region: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        ordinals = np.asarray(self.ordinals, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if not (len(years) == len(ordinals) == len(values)):
            raise LengthMismatch("years, ordinals and values differ in length")
        if len(ordinals) and (ordinals.min() < 1 or ordinals.max() > _MAX_ORDINAL[self.period_kind]):
            raise InvariantViolation(f"{self.period_kind} ordinal out of calendar bounds")
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "ordinals", ordinals)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def periods(self) -> list:
        return [Period(self.period_kind, int(y), int(o)) for y, o in zip(self.years, self.ordinals)]

    def lookup(self) -> dict:
        return {(int(y), int(o)): float(v) for y, o, v in zip(self.years, self.ordinals, self.values)}

    def value(self, year: int, ordinal: int) -> float:
        hit = np.flatnonzero((self.years == year) & (self.ordinals == ordinal))
        return float(self.values[hit[0]]) if len(hit) else float("nan")

    def with_values(self, values, indicator: str | None = None, **meta) -> "IndicatorSeries":
        return IndicatorSeries(
            indicator or self.indicator,
            self.period_kind,
            self.years,
            self.ordinals,
            values,
            self.region,
            {**self.meta, **meta},
        )


def _as_days(dates) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[D]").astype(np.int64)


def period_keys(dates, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(year, ordinal)`` arrays for each date under ``kind``."""
    days = _as_days(dates)
    if kind == "weekly":
        weekday = (days + 3) % 7  # Monday = 0; 1970-01-01 was a Thursday
        thursday = days - weekday + 3
        iso_year = thursday.astype("datetime64[D]").astype("datetime64[Y]").astype(np.int64)
        jan1 = iso_year.astype("datetime64[Y]").astype("datetime64[D]").astype(np.int64)
        return iso_year + 1970, (thursday - jan1) // 7 + 1
    months = days.astype("datetime64[D]").astype("datetime64[M]").astype(np.int64)
    years = months // 12 + 1970
    month = months % 12 + 1
    if kind == "monthly":
        return years, month
    if kind == "quarterly":
        return years, (month - 1) // 3 + 1
    if kind == "annual":
        return years, np.ones_like(years)
    raise ValueError(f"unknown period kind {kind!r}")


def _check_daily(dates, values) -> tuple[np.ndarray, np.ndarray]:
    days = _as_days(dates)
    values = np.asarray(values, dtype=float)
    if len(days) != len(values):
        raise LengthMismatch(f"{len(days)} dates but {len(values)} values")
    if len(days) == 0:
        raise EmptySeries("daily series is empty")
    if len(days) > 1 and np.any(np.diff(days) != 1):
        raise InvariantViolation("daily series is not contiguous")
    return days, values


def aggregate(dates, values, period_kind: str, stat: str = "mean", *, indicator: str = "",
              region: str = "") -> IndicatorSeries:
    """Reduce a contiguous daily series to one value per complete period."""
    if stat not in STATS:
        raise ValueError(f"unknown statistic {stat!r}")
    days, values = _check_daily(dates, values)
    years, ords = period_keys(days, period_kind)
    key = years * 100 + ords
    starts = np.concatenate(([0], np.flatnonzero(np.diff(key)) + 1))
    counts = np.diff(np.concatenate((starts, [len(key)])))
    if stat in ("mean", "sum"):
        out = np.add.reduceat(values, starts)
        if stat == "mean":
            out = out / counts
    elif stat == "min":
        out = np.minimum.reduceat(values, starts)
    else:
        out = np.maximum.reduceat(values, starts)

    keep = np.ones(len(starts), dtype=bool)
    edge_y, edge_o = period_keys(np.array([days[0] - 1, days[-1] + 1]), period_kind)
    edge = edge_y * 100 + edge_o
    if edge[0] == key[0]:
        keep[0] = False
    if edge[1] == key[-1]:
        keep[-1] = False
    return IndicatorSeries(indicator, period_kind, years[starts][keep], ords[starts][keep],
                           out[keep], region)


def count_days(dates, mask, period_kind: str, *, indicator: str = "", region: str = "") -> IndicatorSeries:
    s = aggregate(dates, np.asarray(mask, dtype=float), period_kind, "sum",
                  indicator=indicator, region=region)
    return s.with_values(np.rint(s.values))
