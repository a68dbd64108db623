"""Numerical tools for two-component Bose gases in the mean-field scaling."""

__version__ = "0.1.0"
