"""Symbolic engine, Dolev-Yao harness and property checker for unlinkable
smart-card payments."""

__version__ = "0.1.0"
