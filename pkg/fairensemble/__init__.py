"""Fairness-aware re-weighting of outlier ensemble results."""

__version__ = '0.3.0'
