"""Contact process on scale-free spatial random graphs."""

__version__ = "0.1.0"
