"""Table-text hybrid QA with a multi-view graph encoder and tree decoder."""

__version__ = "0.1.0"
