"""Yield-anomaly prediction with temporal validation and TreeSHAP reliability checks."""

__version__ = "0.1.0"
