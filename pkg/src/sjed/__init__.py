"""sjed - Soft-output joint channel estimation and data detection via deep unfolding."""

__version__ = "0.1.0"
