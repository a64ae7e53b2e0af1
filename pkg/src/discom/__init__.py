"""Distributed contextual content matching: DISCOM, DISCOM-W and a simulator."""

__version__ = "0.1.0"
