"""Exception types raised across the package."""


class GeoEvalError(Exception):
    """Base class for all package errors."""


class GridParseError(GeoEvalError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GridValueError(GridParseError):
    """Non-numeric or non-finite value in a grid file."""


class DuplicateCellError(GridParseError):
    pass


class LocationError(GeoEvalError, IndexError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EmptyPredictionError(GeoEvalError, ValueError):
    pass


class SchemaError(GeoEvalError, ValueError):
    """Covariate names or order differ between two datasets."""


class ShapeError(GeoEvalError, ValueError):
    pass


class InsufficientDataError(GeoEvalError, ValueError):
    pass


class UndefinedAUCError(GeoEvalError, ValueError):
    """AUC requested for labels containing a single class."""


class RangeError(GeoEvalError, ValueError):
    pass


class FoldError(GeoEvalError, ValueError):
    pass


class ConfigError(GeoEvalError, ValueError):
    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
