"""Audit registered reference metadata against publishers' versions of record."""

__version__ = "0.1.0"
