"""Seeded synthetic weather/yield panels with known drivers.

Weather is a seasonal cycle plus per-region offsets and noise.  Yield is

    national quadratic trend + region effect + sum(weight * driver z-score)
    + noise + validation_shift (in shifted years only)

where a driver is a standardized monthly aggregate of one weather variable.
In the shifted years the driver weights may be replaced by a second set,
which is how a temporal regime change is planted.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ConfigInvalid
from .indicators.calendar import aggregate
from .ingest import WEATHER_VARS, WeatherPanel, YieldPanel


@dataclass(frozen=True)
class Driver:
    variable: str
    month: int
    weight: float  # t/ha per standard deviation of the monthly aggregate
    stat: str = "mean"


@dataclass(frozen=True)
class SynthConfig:
    n_regions: int = 20
    year_range: tuple = (1979, 2022)
    seed: int = 0
    drivers: tuple = ()
    noise_sd: float = 0.3
    trend: tuple = (-0.002, 0.08, 6.0)  # (a, b, c) over years since year_range[0]
    validation_shift: float = 0.0
    shifted_years: tuple = ()
    shift_drivers: tuple | None = None  # replaces `drivers` in shifted years
    region_effect_sd: float = 0.6
    climate_offset_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "year_range", tuple(int(y) for y in self.year_range))
        object.__setattr__(self, "drivers", tuple(_as_driver(d) for d in self.drivers))
        if self.shift_drivers is not None:
            object.__setattr__(self, "shift_drivers", tuple(_as_driver(d) for d in self.shift_drivers))
        object.__setattr__(self, "shifted_years", tuple(int(y) for y in self.shifted_years))
        object.__setattr__(self, "trend", tuple(float(v) for v in self.trend))

    def validate(self) -> None:
        first, last = self.year_range
        if self.n_regions < 2:
            raise ConfigInvalid("n_regions must be >= 2")
        if last < first + 14:
            raise ConfigInvalid("year range must span at least 15 years")
        if self.noise_sd < 0:
            raise ConfigInvalid("noise_sd must be >= 0")
        for d in self.drivers + (self.shift_drivers or ()):
            if d.variable not in WEATHER_VARS:
                raise ConfigInvalid(f"driver variable {d.variable!r} is not a weather variable")
            if not 1 <= d.month <= 12:
                raise ConfigInvalid(f"driver month {d.month} out of range")
        for y in self.shifted_years:
            if not first <= y <= last:
                raise ConfigInvalid(f"shifted year {y} outside year range")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown synth config fields: {sorted(unknown)}")
        return cls(**d)


def _as_driver(d) -> Driver:
    if isinstance(d, Driver):
        return d
    try:
        return Driver(**d)
    except TypeError as exc:
        raise ConfigInvalid(f"bad driver spec {d!r}: {exc}") from None


@dataclass(frozen=True)
class GroundTruth:
    seed: int
    drivers: list
    shift_drivers: list | None
    shifted_years: list
    validation_shift: float
    region_effects: dict
    trend: list
    year0: int

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def trend_value(self, year) -> float:
        a, b, c = self.trend
        u = year - self.year0
        return a * u * u + b * u + c


def region_ids(n: int) -> list[str]:
    return [f"DE{i + 1:03d}" for i in range(n)]


def region_rng(seed: int, region: str) -> np.random.Generator:
    # one independent stream per region, so serial and parallel synthesis agree
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(region.encode())])


def _region_weather(rng: np.random.Generator, dates: np.ndarray, climate_sd: float) -> dict:
    n = len(dates)
    doy = (dates - dates.astype("datetime64[Y]")).astype(int) + 1
    season = np.sin(2.0 * np.pi * (doy - 105) / 365.25)

    t_off, w_off, r_off, h_off = rng.normal(0.0, [climate_sd, 0.4, 0.8, 3.0])
    p_mult = rng.uniform(0.8, 1.2)

    anomaly = signal.lfilter([1.0], [1.0, -0.7], rng.normal(0.0, 2.5, n))  # AR(1) temperature anomaly
    tmean = 9.0 + t_off + 9.5 * season + anomaly
    dtr = np.maximum(8.0 + 3.0 * season + rng.normal(0.0, 1.5, n), 1.0)
    wet = rng.random(n) < (0.48 - 0.06 * season)
    precip = np.where(wet, rng.gamma(0.8, 5.0 * p_mult, n), 0.0)
    wind = np.maximum(rng.gamma(4.0, 0.9, n) * (1.0 - 0.15 * season) + w_off, 0.1)
    radiation = np.maximum((11.0 + 9.0 * season + r_off + rng.normal(0.0, 3.0, n)) * np.where(wet, 0.6, 1.0), 0.3)
    rhum = np.clip(78.0 - 10.0 * season + h_off + rng.normal(0.0, 6.0, n) + 8.0 * wet, 15.0, 100.0)

    tmean = np.round(tmean, 2)
    half = np.round(dtr / 2.0, 2)
    return {
        "tmean": tmean,
        "tmax": np.round(tmean + half, 2),
        "tmin": np.round(tmean - half, 2),
        "precip": np.round(precip, 2),
        "wind": np.round(wind, 2),
        "radiation": np.round(radiation, 2),
        "rhum": np.round(rhum, 2),
    }


def _driver_scores(weather: WeatherPanel, drivers, years: np.ndarray) -> np.ndarray:
    """(n_regions, n_years) sum of weight * z-scored monthly aggregate."""
    total = np.zeros((len(weather.regions), len(years)))
    for d in drivers:
        raw = np.empty_like(total)
        for i, region in enumerate(weather.regions):
            s = aggregate(weather.dates, weather.series(region, d.variable), "monthly", d.stat)
            lookup = s.lookup()
            raw[i] = [lookup[(int(y), d.month)] for y in years]
        sd = raw.std()
        z = (raw - raw.mean()) / sd if sd > 0 else np.zeros_like(raw)
        total += d.weight * z
    return total


def synth_generate(cfg: SynthConfig) -> tuple[WeatherPanel, YieldPanel, GroundTruth]:
    """Pure function of ``cfg``: the same config always gives bit-identical panels."""
    cfg.validate()
    first, last = cfg.year_range
    dates = np.arange(np.datetime64(f"{first}-01-01"), np.datetime64(f"{last + 1}-01-01"), dtype="datetime64[D]")
    regions = region_ids(cfg.n_regions)
    data = {v: np.empty((len(regions), len(dates))) for v in WEATHER_VARS}
    effects = {}
    noise = {}
    years = np.arange(first, last + 1)
    for i, region in enumerate(regions):
        rng = region_rng(cfg.seed, region)
        w = _region_weather(rng, dates, cfg.climate_offset_sd)
        for v in WEATHER_VARS:
            data[v][i] = w[v]
        effects[region] = float(rng.normal(0.0, cfg.region_effect_sd))
        noise[region] = rng.normal(0.0, 1.0, len(years)) * cfg.noise_sd
    weather = WeatherPanel(regions, dates, data)

    base = _driver_scores(weather, cfg.drivers, years)
    shifted = np.isin(years, cfg.shifted_years)
    if cfg.shift_drivers is not None:
        alt = _driver_scores(weather, cfg.shift_drivers, years)
        base = np.where(shifted[None, :], alt, base)

    a, b, c = cfg.trend
    u = years - first
    trend = a * u * u + b * u + c
    records = []
    for i, region in enumerate(regions):
        y = trend + effects[region] + base[i] + noise[region] + np.where(shifted, cfg.validation_shift, 0.0)
        for year, value in zip(years, y):
            records.append((region, int(year), float(max(value, 0.1))))
    yields = YieldPanel.from_records(records)

    truth = GroundTruth(
        seed=int(cfg.seed),
        drivers=[asdict(d) for d in cfg.drivers],
        shift_drivers=None if cfg.shift_drivers is None else [asdict(d) for d in cfg.shift_drivers],
        shifted_years=list(cfg.shifted_years),
        validation_shift=float(cfg.validation_shift),
        region_effects=effects,
        trend=list(cfg.trend),
        year0=first,
    )
    return weather, yields, truth
