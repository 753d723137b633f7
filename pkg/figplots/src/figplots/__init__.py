"""Plot scripts for the magnetometer simulator's CSV outputs."""

__version__ = "0.1.0"
