"""Single-step absolute technical efficiency from a censored translog
input distance function."""

__version__ = "0.1.0"
