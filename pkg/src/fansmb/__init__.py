"""Markov boundary discovery by conditional-entropy minimization."""
__version__ = "0.1.0"
