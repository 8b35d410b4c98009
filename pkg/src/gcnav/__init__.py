"""Training-free instruction following by solving spatial graph constraints."""

__version__ = "0.1.0"
