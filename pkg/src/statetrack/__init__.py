"""Linear recurrent networks for state tracking: compilation, finite-precision demos and toy training."""

__version__ = "0.1.0"
