"""Memory-loop atom-light interferometer simulator."""

__version__ = "0.1.0"
