"""Numerical toolkit for the variable-exponent p(x)-Laplacian."""
__version__ = "0.1.0"
