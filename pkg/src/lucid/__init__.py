"""Canonical-set fairness auditing for tabular neural classifiers."""

__version__ = "0.1.0"
