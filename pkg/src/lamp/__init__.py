"""Implicit language field navigation: continuous pose-to-embedding map,
scored topological graph, and coarse-to-fine planning."""

__version__ = "0.1.0"
