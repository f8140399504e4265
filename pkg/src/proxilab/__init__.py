"""proxilab: personalized human-robot proxemics modeling toolkit."""

__version__ = "0.1.0"
