"""Mesoscopic grid traffic simulator for studying selective sharing of travel-time information."""

__version__ = "0.1.0"
