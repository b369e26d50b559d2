"""Martingale-posterior inference by predictive resampling."""

__version__ = "0.1.0"
