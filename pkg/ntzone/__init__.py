"""Asymptotic no-trade regions for small fixed transaction costs."""

__version__ = "0.1.0"
