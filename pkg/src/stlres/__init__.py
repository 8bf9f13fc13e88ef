"""Resilience-aware STL monitoring and exact Pareto-optimal control synthesis."""

__version__ = "0.1.0"
