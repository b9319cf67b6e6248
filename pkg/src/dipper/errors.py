"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or physically invalid input data.

    ``path`` and ``line`` locate the offending record when the data came
    from a file.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericalError(ArithmeticError):
    """A computation could not produce a trustworthy number."""


class RankDeficientError(NumericalError):
    """Design matrix is numerically rank deficient.

    Attributes
    ----------
    columns : tuple of str
        Names of the columns participating in the near-dependency.
    """

    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class FitError(NumericalError):
    """Nonlinear fit failed to converge from every starting point."""

    def __init__(self, message, best_cost=None):
        self.best_cost = best_cost
        super().__init__(message)


class DegenerateGeometryError(NumericalError):
    """Two constraint lines are (nearly) parallel."""


class InfeasibleError(NumericalError):
    """Constraints admit no solution."""
