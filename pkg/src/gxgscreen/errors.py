"""Exception hierarchy. Each class carries the CLI exit status it maps to."""


class GxGError(Exception):
    exit_code = 1
    stage = None


class ConfigError(GxGError, ValueError):
    """Invalid option or configuration value; raised before any computation."""

    exit_code = 2


class IngestionError(GxGError, ValueError):
    """Unreadable or malformed input file (missing fields, non-numeric values)."""

    exit_code = 3


class InsufficientSampleError(GxGError, ValueError):
    """Sample size does not exceed the effective parameter count."""

    exit_code = 4


class CleaningInfeasibleError(GxGError, ValueError):
    """Least-squares cleaning has no residual degrees of freedom."""

    exit_code = 4


class NumericalError(GxGError, ArithmeticError):
    exit_code = 5


class SingularDesignError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass
