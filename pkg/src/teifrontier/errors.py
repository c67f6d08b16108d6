"""Exception hierarchy shared by the estimation pipeline."""


class TeiFrontierError(Exception):
    """Base class for every error raised by this package."""


class DataError(TeiFrontierError, ValueError):
    """Input data failed validation.

    ``row`` is the 1-based data row (header excluded) and ``column`` the
    offending column, when known.
    """

    def __init__(self, message, row=None, column=None):
        self.detail = message
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(DataError):
    pass


class NonPositiveValue(DataError):
    pass


class LoadFactorOutOfRange(DataError):
    pass


class DuplicateKey(DataError):
    pass


class RankDeficientRestrictions(TeiFrontierError, ValueError):
    pass


class NonFiniteLikelihood(TeiFrontierError, ArithmeticError):
    pass


class DimensionMismatch(TeiFrontierError, ValueError):
    pass


class DegenerateScale(TeiFrontierError, ArithmeticError):
    """Output elasticity of distance is (numerically) zero, so RTS is undefined."""


class UnknownHypothesis(TeiFrontierError, KeyError):
    pass


class NotNested(TeiFrontierError, ValueError):
    pass


class InvalidTruth(TeiFrontierError, ValueError):
    pass
