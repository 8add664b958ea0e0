"""Long-range random media, fractional Brownian fields and the fractional Ito-Schrodinger equation."""

__version__ = "0.1.0"
