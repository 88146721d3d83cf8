"""Design and simulation tools for a surface-electrode Penning micro-trap."""

__version__ = "0.1.0"
