"""Latency-bounded streaming rumour detection with coefficient-based load shedding."""

__version__ = "0.1.0"
