"""Simulation and analysis toolkit for a DWDM entanglement-distribution QKD network."""

__version__ = "0.1.0"
