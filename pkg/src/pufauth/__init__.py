"""Remote entity authentication with simulated optical PUF tokens."""

__version__ = "0.1.0"
