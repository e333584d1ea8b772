"""linkforge: graph learning with a trainable link-injection layer."""

__version__ = "0.1.0"
