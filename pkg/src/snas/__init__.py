"""Stochastic-ordering evaluation of zero-shot NAS ranking functions."""

__version__ = "0.1.0"
