"""Self-hosted recommendations-as-a-service engine for related articles."""

__version__ = "0.1.0"
