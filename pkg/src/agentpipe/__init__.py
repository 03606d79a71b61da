"""Discrete-event simulator of mobile-agent task ordering for robot pipelines."""

__version__ = "0.1.0"
