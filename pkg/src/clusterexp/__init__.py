"""Canonical-ensemble cluster expansion for finite-range classical gases."""

__version__ = "0.1.0"
