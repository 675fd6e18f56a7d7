"""Supervised multi-view representation learning with self-attention fusion."""

from . import data, experiment, model, numerics, training

__all__ = ["data", "experiment", "model", "numerics", "training"]
__version__ = "0.1.0"
