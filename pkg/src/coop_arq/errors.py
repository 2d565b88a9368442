"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user configuration (bad scenario, thresholds, file)."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or left its domain."""


class ComplexityError(NumericalError):
    """An exact enumeration would be too large to evaluate."""


class SearchError(NumericalError):
    """A root or threshold search did not find a bracket."""
