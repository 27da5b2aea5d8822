"""Planar pushing of randomized objects with goal-conditioned, history-aware SAC agents."""

__version__ = "0.1.0"
