"""Sparse similarity graphs and fairness-constrained clustering for receptor repertoires."""

__version__ = "0.1.0"
