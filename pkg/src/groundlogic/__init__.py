"""Referring-expression grounding with a finite-state automaton and probabilistic logic."""

__version__ = "0.1.0"
