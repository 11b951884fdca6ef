"""Tariff impact studies for flexible residential loads on low-voltage feeders."""

__version__ = "0.1.0"
