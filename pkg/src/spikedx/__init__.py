"""Population decoding of winner-take-all spiking networks on imbalanced tabular data."""

__version__ = "0.1.0"
