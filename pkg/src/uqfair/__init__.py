"""Heteroscedastic uncertainty estimators for tabular data, their consistency
and calibration checks, and uncertainty-aware fairness metrics."""

__version__ = "0.1.0"
