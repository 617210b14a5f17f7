"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model or experiment configuration (bad graph, bad config file)."""


class NumericalError(RuntimeError):
    """An iterative solver failed to converge; carries diagnostics in the message."""
