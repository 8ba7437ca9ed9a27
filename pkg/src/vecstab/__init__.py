"""Empirical stability diagnostics for near-neighbor search problems."""

__version__ = "0.1.0"
