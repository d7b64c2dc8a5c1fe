"""Chest X-ray severity scoring from pathology features."""

__version__ = "0.1.0"
