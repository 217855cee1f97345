"""Exception hierarchy shared by the library and the command line."""


class PBJError(Exception):
    """Base class for all errors raised by :mod:`pbj`."""


class ValidationError(PBJError, ValueError):
    """Inputs violate a documented precondition."""


class RankDeficientError(ValidationError):
    """A design matrix does not have full column rank.

    Attributes
    ----------
    dependent_columns : list
        Labels (or integer positions) of the columns found to be linearly
        dependent on the preceding ones.
    """

    def __init__(self, message, dependent_columns=()):
        super().__init__(message)
        self.dependent_columns = list(dependent_columns)


class ParseError(ValidationError):
    """A matrix file could not be parsed.

    ``row`` and ``column`` are 1-based file coordinates when known.
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(PBJError, ArithmeticError):
    """A numerical routine failed (e.g. SVD did not converge)."""
