"""Day-count extreme-weather indicators (absolute, percentile and custom rules)."""

from __future__ import annotations

import operator

import numpy as np

from ..errors import InsufficientReference, LengthMismatch
from .calendar import IndicatorSeries, count_days

COMPARATORS = {
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
    "≤": operator.le,
    "≥": operator.ge,
}


def empirical_quantile(values, percentile: float) -> float:
    """Type-7 sample quantile (linear interpolation between order statistics)."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise InsufficientReference("empty reference sample")
    return float(np.quantile(values, percentile / 100.0, method="linear"))


def _reference_values(dates, values, reference) -> np.ndarray:
    years = np.asarray(dates, dtype="datetime64[D]").astype("datetime64[Y]").astype(int) + 1970
    values = np.asarray(values, dtype=float)
    if reference is None:
        return values
    lo, hi = reference
    ref = values[(years >= lo) & (years <= hi)]
    if len(ref) == 0:
        raise InsufficientReference(f"no daily values in reference window {lo}-{hi}")
    return ref


def count_threshold_days(dates, values, comparator: str, threshold: float, period_kind: str,
                         *, indicator: str = "threshold_days", region: str = "") -> IndicatorSeries:
    op = COMPARATORS[comparator]
    mask = op(np.asarray(values, dtype=float), threshold)
    s = count_days(dates, mask, period_kind, indicator=indicator, region=region)
    return s.with_values(s.values, comparator=comparator, threshold=threshold)


def percentile_threshold_days(dates, values, percentile: float, reference, side: str,
                              period_kind: str, *, indicator: str = "percentile_days",
                              region: str = "") -> IndicatorSeries:
    """Count days beyond the region's reference-period percentile.

    ``side="above"`` counts values strictly greater than the threshold,
    ``side="below"`` strictly smaller.
    """
    if side not in ("above", "below"):
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    if len(np.asarray(values)) != len(np.asarray(dates)):
        raise LengthMismatch("dates and values differ in length")
    threshold = empirical_quantile(_reference_values(dates, values, reference), percentile)
    comparator = ">" if side == "above" else "<"
    return count_threshold_days(dates, values, comparator, threshold, period_kind,
                                indicator=indicator, region=region)


def wechselfrost_days(dates, tmin, tmax, period_kind: str, *, region: str = "") -> IndicatorSeries:
    """Freeze-thaw days: tmax above and tmin below 0 °C on the same day."""
    tmin = np.asarray(tmin, dtype=float)
    tmax = np.asarray(tmax, dtype=float)
    if tmin.shape != tmax.shape:
        raise LengthMismatch("tmin and tmax differ in length")
    return count_days(dates, (tmax > 0.0) & (tmin < 0.0), period_kind,
                      indicator="wechselfrost_days", region=region)


def gewitter_days(dates, precip, wind, period_kind: str, precip_min: float = 15.0,
                  wind_percentile: float = 95.0, reference=None, *, region: str = "") -> IndicatorSeries:
    """Proxy thunderstorm days: heavy precipitation together with high wind."""
    precip = np.asarray(precip, dtype=float)
    wind = np.asarray(wind, dtype=float)
    if precip.shape != wind.shape:
        raise LengthMismatch("precip and wind differ in length")
    wind_thr = empirical_quantile(_reference_values(dates, wind, reference), wind_percentile)
    mask = (precip >= precip_min) & (wind >= wind_thr)
    s = count_days(dates, mask, period_kind, indicator="gewitter_days", region=region)
    return s.with_values(s.values, precip_min=precip_min, wind_threshold=wind_thr)
