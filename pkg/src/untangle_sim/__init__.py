"""Deterministic simulator and planning stack for bilateral cable untangling."""

__version__ = "0.1.0"
