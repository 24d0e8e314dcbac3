"""Obstacle problems in critically perforated media: solvers and probes."""

__version__ = "0.1.0"
