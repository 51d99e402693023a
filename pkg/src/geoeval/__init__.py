"""Dissimilarity quantification by adversarial validation and spatial CV evaluation."""

__version__ = "0.1.0"
