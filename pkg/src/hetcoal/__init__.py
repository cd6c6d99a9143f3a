"""Learning heterogeneous coalition-formation strategies from demonstrations."""

__version__ = "0.1.0"
