"""Adaptive music system: a context graph of game state drives learning
melody agents over a shared harmonic resource matrix, rendered to MIDI."""

__version__ = "0.1.0"
