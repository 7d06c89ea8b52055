"""Exception types shared across the package."""


class DemandStackError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DemandStackError):
    """Schema is malformed or does not match the data it describes."""


class ParseError(DemandStackError):
    """A cell could not be parsed under its declared column kind."""


class DataError(DemandStackError):
    """Data violates a precondition (empty, non-finite, mismatched lengths...)."""


class DegenerateVarianceError(DemandStackError):
    """A statistic is undefined because the within-group variance is zero."""


class ProtocolError(DemandStackError):
    """A repeated-evaluation run failed; the message names the model entry."""
