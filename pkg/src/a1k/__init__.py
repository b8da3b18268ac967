"""Numerical Koppelman operator on the A1 cone {z1 z2 = z3^2} via its double cover."""

__version__ = "0.1.0"
