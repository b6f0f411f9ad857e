"""Graph-augmented LSTM anomaly detection on multivariate time series."""

__version__ = "0.1.0"
