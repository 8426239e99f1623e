"""Satellite-assisted entanglement distribution: lightpath provisioning,
entanglement-distribution planning and slotted Monte-Carlo execution."""

__version__ = "0.1.0"
