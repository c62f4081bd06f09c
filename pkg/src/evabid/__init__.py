"""Marginal-opportunity-value bidding for EV aggregators in real-time markets."""

from evabid._accel import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
