"""Blind phoneme segmentation from prediction-error peaks."""

__version__ = "0.1.0"
