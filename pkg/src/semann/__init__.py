"""Two-stage SEM and neural-network analysis of survey data."""

__version__ = "0.1.0"
