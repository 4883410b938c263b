"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so new error types should subclass the
closest existing category rather than ``GraphNetError`` directly.
"""


class GraphNetError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GraphNetError):
    pass


class FormatError(GraphNetError):
    pass


class DataError(GraphNetError):
    pass


class ShapeError(DataError):
    pass


class DegenerateColumnError(DataError):
    pass


class LabelError(DataError):
    pass


class ResampleError(DataError):
    pass


class SpecError(GraphNetError):
    """Invalid synthetic-data specification (e.g. blob outside the mask)."""


class GraphError(GraphNetError):
    pass


class ParameterError(GraphNetError):
    pass


class PlanError(GraphNetError):
    pass


class NumericError(GraphNetError):
    pass


class VerificationError(GraphNetError):
    pass
