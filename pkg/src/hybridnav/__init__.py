"""Hybrid local navigation: a DWA tracker with a reactive fallback, plus a small simulator."""

__version__ = "0.1.0"
