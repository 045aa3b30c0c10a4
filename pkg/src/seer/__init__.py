"""Source-to-source super-optimizer for a small hardware-oriented loop language."""

__version__ = "0.1.0"
