"""Fluid reconfigurable intelligent surface simulator."""

__version__ = "0.1.0"
