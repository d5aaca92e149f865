"""Exception hierarchy shared by all rfi modules."""


class RFIError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(RFIError, ValueError):
    pass


class NumericError(RFIError, ValueError):
    pass


class SolverError(RFIError, RuntimeError):
    pass


class ConfigError(RFIError, ValueError):
    pass


class UnsupportedOperatorError(RFIError, TypeError):
    pass


class InconsistencyError(RFIError, ArithmeticError):
    """A computed quantity contradicts a structural identity (e.g. R(x)=0 off C)."""


class DegenerateError(RFIError, ValueError):
    pass


class ShapeError(RFIError, ValueError):
    pass


class RowSkippedError(RFIError, ValueError):
    """The requested row of a discretized operator has (numerically) zero norm."""
