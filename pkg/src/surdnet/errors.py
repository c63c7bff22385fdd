"""Exception types shared across the package."""


class SurdnetError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SurdnetError, ValueError):
    """Operand shapes are incompatible."""


class SizeError(SurdnetError, ValueError):
    """A requested size is invalid or too large."""


class ParameterError(SurdnetError, ValueError):
    """A numeric parameter is outside its legal range."""


class ConfigError(SurdnetError, ValueError):
    """An architecture or run configuration is inconsistent."""


class StateError(SurdnetError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class ModeError(SurdnetError, RuntimeError):
    """An operation requires the other train/infer mode."""


class FormatError(SurdnetError, ValueError):
    """A binary file failed to parse.  Carries the byte offset of the failure."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = "%s (at byte offset %d)" % (message, offset)
        super().__init__(message)
        self.offset = offset


class TrainingError(SurdnetError, RuntimeError):
    """Training diverged (NaN/Inf) or could not proceed."""
