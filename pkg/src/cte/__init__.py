"""Cluster-based tile embeddings, two-step level generation and level metrics."""

__version__ = "0.1.0"
