"""Figure rendering for floqmc simulation CSVs (read-only consumer)."""

__version__ = "0.1.0"
