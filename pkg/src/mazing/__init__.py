"""Frustrated-agent maze game, annotation traces and preference learning."""

__version__ = "0.1.0"
