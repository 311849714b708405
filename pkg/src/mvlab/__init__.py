"""Simulation and diagnostics for mollified McKean-Vlasov particle systems with common noise."""

__version__ = "0.1.0"
