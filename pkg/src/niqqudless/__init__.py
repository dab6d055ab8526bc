"""Diacritic-free Hebrew LM-TTS toolkit."""

__version__ = "0.1.0"
