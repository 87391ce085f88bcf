"""Protected content distribution with cache-friendly encrypted names."""

__version__ = "0.1.0"
