"""Self-supervised pretraining of MLP encoders on high-dimensional tabular data."""

__version__ = "0.1.0"
