"""Text-guided meteorological time-series generation toolkit."""

__version__ = "0.1.0"
