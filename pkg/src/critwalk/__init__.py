"""Simulation lab for the critical Erdős–Rényi giant component and random walks on it."""
from ._accel import backend, set_backend, use_backend
from .graphgen import Component, GnpParams, graph_distance, largest_component, sample_gnp

__version__ = "0.1.0"

__all__ = [
    "Component",
    "GnpParams",
    "backend",
    "graph_distance",
    "largest_component",
    "sample_gnp",
    "set_backend",
    "use_backend",
]
