"""Desk-scale laboratory for associative vs. geometric parametric memory."""

from . import analysis, data, graphs, models, tensor, training

__all__ = ["analysis", "data", "graphs", "models", "tensor", "training"]
__version__ = "0.1.0"
