"""Fingerprint classification from block orientation fields.

Pipeline: orientation field -> (sin 2t, cos 2t) features -> stacked sparse
autoencoder -> softmax regression -> fuzzy / reject post-processing.
"""
from fpsae.classes import ClassLabel

__version__ = "0.1.0"

__all__ = ["ClassLabel", "__version__"]
