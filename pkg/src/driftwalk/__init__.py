"""Negative-drift recurrence toolkit."""

__version__ = "0.1.0"
