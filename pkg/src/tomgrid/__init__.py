"""Deterministic generator, verifier, and evaluation harness for spatial
theory-of-mind question answering in multi-agent gridworlds."""

__version__ = "0.1.0"
