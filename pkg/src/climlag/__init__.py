"""Climate-lagged monthly case-count forecasting toolkit."""

__version__ = "0.1.0"
