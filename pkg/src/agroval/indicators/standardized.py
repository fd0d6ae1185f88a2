"""Standardized drought indices (SPI, SPEI) fitted by L-moments.

SPI fits a gamma distribution to the non-zero accumulations of each calendar
month and mixes in a point mass at zero; SPEI fits a three-parameter
log-logistic distribution to the (signed) climatic water balance.  Fitted
probabilities go through the standard-normal quantile function and are
clamped to ``[-CLAMP, CLAMP]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..errors import DegenerateFit, InsufficientReference, InvariantViolation
from .calendar import IndicatorSeries

CLAMP = 5.0
MIN_REFERENCE = 20


def sample_lmoments(x) -> tuple[float, float, float]:
    """First two sample L-moments and the L-skewness, via unbiased PWMs."""
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    if n < 3:
        raise DegenerateFit(f"need at least 3 values for L-moments, got {n}")
    j = np.arange(n, dtype=float)
    b0 = x.mean()
    b1 = np.sum(j * x) / (n * (n - 1))
    b2 = np.sum(j * (j - 1) * x) / (n * (n - 1) * (n - 2))
    l1 = b0
    l2 = 2.0 * b1 - b0
    l3 = 6.0 * b2 - 6.0 * b1 + b0
    t3 = l3 / l2 if l2 > 0 else float("nan")
    return float(l1), float(l2), float(t3)


def _gamma_shape_from_lcv(cv: float) -> float:
    # Hosking's rational approximations for the gamma shape given L-CV
    if cv < 0.5:
        t = math.pi * cv * cv
        return (1.0 - 0.3080 * t) / (t * (1.0 + t * (-0.05812 + t * 0.01765)))
    t = 1.0 - cv
    return t * (0.7213 - 0.5947 * t) / (1.0 - 2.1817 * t + 1.2113 * t * t)


def normal_quantile(p):
    """Inverse standard-normal CDF (Cephes ``ndtri``)."""
    return special.ndtri(p)


@dataclass(frozen=True)
class GammaMixFit:
    """H(x) = q + (1 - q) * G(x; shape, scale) for x > 0, H(0) = q."""

    shape: float
    scale: float
    zero_prob: float

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        g = special.gammainc(self.shape, np.maximum(x, 0.0) / self.scale)
        return np.where(x > 0, self.zero_prob + (1.0 - self.zero_prob) * g, self.zero_prob)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        inner = np.clip((p - self.zero_prob) / (1.0 - self.zero_prob), 0.0, 1.0)
        return np.where(p > self.zero_prob, special.gammaincinv(self.shape, inner) * self.scale, 0.0)

    def standardize(self, x):
        return np.clip(normal_quantile(self.cdf(x)), -CLAMP, CLAMP)


def fit_gamma_mix(values) -> GammaMixFit:
    """Gamma L-moment fit on the positive values, zero mass q = zeros / (n + 1)."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    n = len(values)
    pos = values[values > 0]
    if n == 0 or np.ptp(values) == 0:
        raise DegenerateFit("reference values have zero variance")
    if len(pos) < 3 or np.ptp(pos) == 0:
        raise DegenerateFit("too few distinct positive reference values for a gamma fit")
    l1, l2, _ = sample_lmoments(pos)
    cv = l2 / l1
    if not 0 < cv < 1:
        raise DegenerateFit(f"L-CV {cv} outside (0, 1)")
    shape = _gamma_shape_from_lcv(cv)
    q = (n - len(pos)) / (n + 1)
    return GammaMixFit(shape=shape, scale=l1 / shape, zero_prob=q)


@dataclass(frozen=True)
class LogLogisticFit:
    """Three-parameter log-logistic in the generalized-logistic parameterization.

    F(x) = 1 / (1 + exp(-y)),  y = -log(1 - k (x - loc) / scale) / k  (k != 0).
    """

    loc: float
    scale: float
    shape: float

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.loc) / self.scale
        k = self.shape
        if abs(k) < 1e-8:
            y = z
        else:
            arg = 1.0 - k * z
            with np.errstate(divide="ignore", invalid="ignore"):
                y = -np.log(np.where(arg > 0, arg, 1.0)) / k
            # outside the support: upper bound for k > 0, lower bound for k < 0
            y = np.where(arg > 0, y, np.inf if k > 0 else -np.inf)
        return special.expit(y)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        odds = (1.0 - p) / p
        k = self.shape
        if abs(k) < 1e-8:
            return self.loc - self.scale * np.log(odds)
        return self.loc + self.scale * (1.0 - odds**k) / k

    def standardize(self, x):
        return np.clip(normal_quantile(self.cdf(x)), -CLAMP, CLAMP)


def fit_log_logistic(values) -> LogLogisticFit:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if len(values) == 0 or np.ptp(values) == 0:
        raise DegenerateFit("reference values have zero variance")
    l1, l2, t3 = sample_lmoments(values)
    if not (l2 > 0 and abs(t3) < 1):
        raise DegenerateFit(f"invalid L-moments (l2={l2}, t3={t3})")
    k = -t3
    if abs(k) < 1e-8:
        scale = l2
        loc = l1
    else:
        kpi = k * math.pi
        scale = l2 * math.sin(kpi) / kpi
        loc = l1 - scale * (1.0 / k - math.pi / math.sin(kpi))
    return LogLogisticFit(loc=loc, scale=scale, shape=k)


def rolling_sum(values, scale: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if scale < 1:
        raise ValueError("scale must be >= 1")
    if scale == 1:
        return values.copy()
    out = np.full(len(values), np.nan)
    if len(values) >= scale:
        # explicit window sums; cumsum differences would break exact scale invariance
        windows = np.lib.stride_tricks.sliding_window_view(values, scale)
        out[scale - 1:] = windows.sum(axis=1)
    return out


def _check_monthly(series: IndicatorSeries) -> None:
    if series.period_kind != "monthly":
        raise InvariantViolation("standardized indices need a monthly series")
    idx = series.years * 12 + series.ordinals
    if len(idx) > 1 and np.any(np.diff(idx) != 1):
        raise InvariantViolation("monthly series is not consecutive")


def _standardize(series: IndicatorSeries, scale: int, reference, fitter, name: str) -> IndicatorSeries:
    _check_monthly(series)
    acc = rolling_sum(series.values, scale)
    if reference is None:
        reference = (int(series.years.min()), int(series.years.max()))
    lo, hi = reference
    in_ref = (series.years >= lo) & (series.years <= hi) & np.isfinite(acc)
    out = np.full(len(acc), np.nan)
    fits = {}
    for month in range(1, 13):
        at_month = series.ordinals == month
        if not at_month.any():
            continue
        ref = acc[at_month & in_ref]
        if len(ref) < MIN_REFERENCE:
            raise InsufficientReference(
                f"{name}: month {month} has {len(ref)} reference values, need {MIN_REFERENCE}"
            )
        fit = fitter(ref)
        fits[month] = fit
        sel = at_month & np.isfinite(acc)
        out[sel] = fit.standardize(acc[sel])
    return IndicatorSeries(name, "monthly", series.years, series.ordinals, out, series.region,
                           {"scale": scale, "reference": tuple(reference), "fits": fits})


def spi(monthly_precip: IndicatorSeries, scale: int = 1, reference=None) -> IndicatorSeries:
    """Standardized Precipitation Index on a monthly precipitation-sum series."""
    return _standardize(monthly_precip, scale, reference, fit_gamma_mix, "spi")


def spei(monthly_balance: IndicatorSeries, scale: int = 1, reference=None) -> IndicatorSeries:
    """Standardized Precipitation-Evapotranspiration Index on monthly P - PET sums."""
    return _standardize(monthly_balance, scale, reference, fit_log_logistic, "spei")


def quarterly_sample(monthly: IndicatorSeries) -> IndicatorSeries:
    """Keep the quarter-end months (3, 6, 9, 12) and relabel them as quarters."""
    keep = monthly.ordinals % 3 == 0
    return IndicatorSeries(monthly.indicator, "quarterly", monthly.years[keep],
                           monthly.ordinals[keep] // 3, monthly.values[keep], monthly.region,
                           dict(monthly.meta))
