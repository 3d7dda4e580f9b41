"""Numerical laboratory for divisor-bounded multiplicative functions in short intervals."""

__version__ = "0.1.0"
