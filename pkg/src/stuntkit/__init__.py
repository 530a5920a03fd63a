"""Imbalanced-classification toolkit for child growth screening data."""

__version__ = "0.1.0"
