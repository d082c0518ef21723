"""Sentence-level online handwriting recognition toolkit."""

__version__ = "0.1.0"
