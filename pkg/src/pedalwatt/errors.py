"""Exception hierarchy.

Every error raised on bad input derives from :class:`PedalwattError` so the
CLI can map it onto the data-error exit code.
"""


class PedalwattError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PedalwattError, ValueError):
    """Invalid parameters or thresholds."""


class TimestampError(PedalwattError, ValueError):
    """A sample arrived with a timestamp not after the previous one."""


class InvalidSegmentError(PedalwattError, ValueError):
    """A stroke segment too short or of zero duration."""


class ShapeError(PedalwattError, ValueError):
    """Array dimensions do not match the model or each other."""


class CalibrationError(PedalwattError, ValueError):
    pass


class TrainingError(PedalwattError, RuntimeError):
    """Training diverged or was given unusable data."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch


class NumericError(PedalwattError, FloatingPointError):
    pass


class AlignmentError(PedalwattError, ValueError):
    """Sensor and reference streams do not overlap in time."""

    def __init__(self, message, overlap_fraction=0.0):
        super().__init__(f"{message} (overlap fraction {overlap_fraction:.3f})")
        self.overlap_fraction = overlap_fraction


class ParseError(PedalwattError, ValueError):
    """Malformed CSV input; ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class ModelFormatError(PedalwattError, ValueError):
    """Base for model file decoding failures."""


class BadMagicError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class BenchmarkError(PedalwattError, RuntimeError):
    pass
