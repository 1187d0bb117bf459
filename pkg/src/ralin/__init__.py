"""Replicated data types, a replica simulator, and a linearizability checker for their histories."""

__version__ = "0.1.0"
