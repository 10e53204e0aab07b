"""flagrank: feedback-driven anomaly ranking for sparse Boolean process data."""

__version__ = "0.1.0"
