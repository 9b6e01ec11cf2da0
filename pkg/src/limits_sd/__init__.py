"""Deterministic system-dynamics toolkit: World3-03 corpus, an AI pollution
pathway, and scenario comparison utilities."""

__version__ = "0.1.0"
