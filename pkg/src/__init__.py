"""Monocular depth estimation runtime built around the METER encoder-decoder."""

__version__ = "1.0.0"
