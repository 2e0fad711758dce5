"""Controllable question-generation pipeline and evaluation harness."""

__version__ = "0.1.0"
