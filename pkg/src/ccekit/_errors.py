class ConfigError(ValueError):
    """Invalid simulation or experiment configuration."""


class EstimationError(ArithmeticError):
    """The pooled CCE denominator could not be inverted."""


class SelectionError(ArithmeticError):
    """Every candidate subset was inadmissible."""


class InadmissibleSubsetError(ArithmeticError):
    """The objective of a subset is undefined (singular moment matrix)."""
