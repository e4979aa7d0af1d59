"""Content-adaptive learnable audio front end, desk-scale edition."""

__version__ = "0.1.0"
