"""Error hierarchy. Each class carries the CLI exit code for its failure class."""


class SirError(Exception):
    exit_code = 1


class InputError(SirError, ValueError):
    """Malformed data, inconsistent shapes or invalid parameters."""

    exit_code = 1


class NumericalError(SirError, ArithmeticError):
    exit_code = 2


class SingularCovarianceError(NumericalError):
    pass


class SingularUpdateError(NumericalError):
    pass


class InfeasibleError(SirError):
    """The request cannot be satisfied for this data (e.g. no counterexample exists)."""

    exit_code = 3
