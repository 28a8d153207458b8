"""Percolation laboratory: isoperimetry, separation events and multiscale renormalization on graphs."""

__version__ = "0.1.0"
