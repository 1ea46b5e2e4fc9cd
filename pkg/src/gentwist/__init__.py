"""Numerical toolkit for generalized complex geometry and generalized twistor spaces."""

__version__ = "0.1.0"
