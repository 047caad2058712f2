"""Cycle-tag scheduling for CSQF time-sensitive flows."""
__version__ = "0.1.0"
