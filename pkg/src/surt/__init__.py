"""Streaming two-talker transducer with endpoint detection, at desk scale."""

__version__ = "0.1.0"
