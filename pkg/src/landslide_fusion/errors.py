"""Exception hierarchy shared by every stage of the pipeline."""


class LandslideError(Exception):
    """Base class for all package errors."""


class ValidationError(LandslideError, ValueError):
    """Input violates a documented precondition."""


class FormatError(ValidationError):
    """A file container or table header is malformed."""


class ShapeError(ValidationError):
    """Array rank, shape or channel count does not match the contract."""


class DataError(ValidationError):
    """Values are present but unacceptable (non-finite, duplicated, out of range)."""


class PreconditionError(ValidationError):
    pass


class MetricError(ValidationError):
    pass


class CalibrationError(ValidationError):
    pass


class TrainingError(LandslideError, RuntimeError):
    """Model fitting cannot proceed (e.g. single-class training portion)."""


class StateError(LandslideError, RuntimeError):
    """Operation invoked out of order (e.g. backward before forward)."""


class OptimizerError(LandslideError, RuntimeError):
    pass
