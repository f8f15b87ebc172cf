"""Timetable synchronization, delay propagation and avalanche analytics."""

__version__ = "0.1.0"
