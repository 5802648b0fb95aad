"""pqtoken: single-shot post-quantum machine-to-machine tokens."""

__version__ = "1.0.0"
