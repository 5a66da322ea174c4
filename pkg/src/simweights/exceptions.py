"""Exception types raised across the package."""


class SimWeightsError(Exception):
    """Base class for all package errors."""


class DataError(SimWeightsError, ValueError):
    """Malformed or inconsistent input data."""


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class UnknownSubgroup(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NegativeInput(DataError):
    pass


class AllZeroWeights(DataError):
    pass


class SingleClassError(DataError):
    """All positively weighted labels belong to one class."""


class CsvFormatError(DataError):
    """A CSV file violates the documented schema.

    Carries the 1-based data row (header excluded) and the column name of
    the first offending cell when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalFailure(SimWeightsError, ArithmeticError):
    """A fit could not be computed reliably."""


class RankDeficient(NumericalFailure):
    pass
