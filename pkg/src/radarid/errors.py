"""Exception hierarchy shared across the package."""


class RadaridError(Exception):
    """Base class for every error raised by this package."""


class UnknownLabelError(RadaridError, KeyError):
    """A class name that was never registered in the label set."""

    def __str__(self):  # KeyError would repr() the message
        return self.args[0] if self.args else ""


class MalformedRowError(RadaridError, ValueError):
    """A CSV row that does not fit the expected column layout."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonNumericFieldError(MalformedRowError):
    """A CSV field that failed numeric parsing."""

    def __init__(self, column, value, line):
        super().__init__(f"column {column!r}: not a number: {value!r}", line)
        self.column = column


class ManifestError(RadaridError, ValueError):
    """A dataset manifest that violates the documented schema."""


class MissingFileError(RadaridError, FileNotFoundError):
    """A manifest entry points at a file that does not exist."""


class InconsistentLabelSetError(RadaridError, ValueError):
    """Conflicting class assignments for the same recording file."""


class ClassTooSmallError(RadaridError, ValueError):
    """A class with too few examples to split."""


class FractionOutOfRangeError(RadaridError, ValueError):
    """A split ratio or labeled fraction outside its valid interval."""


class EmptyInputError(RadaridError, ValueError):
    """An operation that requires at least one element received none."""


class TooFewRowsError(RadaridError, ValueError):
    """Fewer feature rows than one window requires."""


class ShapeMismatchError(RadaridError, ValueError):
    """An array whose shape disagrees with the expected one."""


class InputShorterThanKernelError(ShapeMismatchError):
    """A convolution input shorter than the kernel."""


class EmptyDatasetError(RadaridError, ValueError):
    """A training set with no examples."""


class CheckpointError(RadaridError):
    """Base class for model persistence failures."""


class VersionMismatchError(CheckpointError):
    """A checkpoint written with an unsupported schema version."""


class CorruptCheckpointError(CheckpointError):
    """A checkpoint file that cannot be decoded."""


class LengthMismatchError(RadaridError, ValueError):
    """Prediction and truth sequences of different lengths."""


class MissingDomainError(RadaridError, KeyError):
    """A grid row referencing a domain absent from the dataset."""

    def __str__(self):
        return self.args[0] if self.args else ""


class MissingClassError(RadaridError, ValueError):
    """A classifier asked to fit a class with no training rows."""


class ConfigError(RadaridError, ValueError):
    """An invalid run configuration (unknown key, bad value, contradiction)."""
