"""piq — synthesis of polynomial quantitative invariants for
annotated probabilistic loops."""

__version__ = "0.1.0"
