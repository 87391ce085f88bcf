"""Discrete-event NDN simulator."""

from .engine import RunMetrics, Simulator, run

__all__ = ["RunMetrics", "Simulator", "run"]
