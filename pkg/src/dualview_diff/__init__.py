"""Dual-view mammogram synthesis with a three-channel difference-guided DDPM."""

from dualview_diff.codec import DualViewPair, consistency_residual, decode, encode

__version__ = "0.1.0"

__all__ = ["DualViewPair", "encode", "decode", "consistency_residual", "__version__"]
