"""Time-range-Doppler radar activity recognition with orthogonal projections."""

__version__ = "0.1.0"
