"""Exception types shared across the package."""


class RoadGraphError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RoadGraphError):
    """Input values violate a documented precondition (non-finite coords,
    bad thresholds, mismatched dimensions, ...)."""


class GraphStructureError(RoadGraphError):
    """Graph construction received structurally invalid data (self-loops,
    out-of-range vertex indices)."""


class ParseError(RoadGraphError):
    """A file could not be parsed. Carries the offending position when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class PredictionLookupError(RoadGraphError):
    """A file-backed predictor has no stored record for a query point."""
