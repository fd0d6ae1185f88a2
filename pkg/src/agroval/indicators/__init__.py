"""Weather indicators: period aggregates, PET, SPI/SPEI, extreme-day counts and feature tables."""

from .calendar import IndicatorSeries, Period, aggregate, period_keys
from .extremes import (
    count_threshold_days,
    empirical_quantile,
    gewitter_days,
    percentile_threshold_days,
    wechselfrost_days,
)
from .features import (
    REGION_MEAN_YIELD,
    FeatureEntry,
    FeatureSpec,
    FeatureTable,
    build_feature_table,
    load_feature_spec,
)
from .pet import pet_penman_monteith
from .standardized import spei, spi

__all__ = [
    "IndicatorSeries",
    "Period",
    "aggregate",
    "period_keys",
    "count_threshold_days",
    "empirical_quantile",
    "gewitter_days",
    "percentile_threshold_days",
    "wechselfrost_days",
    "REGION_MEAN_YIELD",
    "FeatureEntry",
    "FeatureSpec",
    "FeatureTable",
    "build_feature_table",
    "load_feature_spec",
    "pet_penman_monteith",
    "spei",
    "spi",
]
