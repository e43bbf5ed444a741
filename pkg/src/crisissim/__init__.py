"""crisissim: desk-scale multi-agent emergency-response simulation."""

__version__ = "0.1.0"
