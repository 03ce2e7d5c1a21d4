"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all provtrace errors."""


class InvalidConfigError(ToolkitError):
    """A configuration value is contradictory or out of its allowed range."""


class DegenerateTransformError(ToolkitError):
    """A geometric transform would produce an output of less than one pixel."""


class TooSmallImageError(ToolkitError):
    """Image is smaller than the minimum patch window."""


class ShapeError(ToolkitError):
    """An array has the wrong shape or dimensionality."""


class InvalidArchitectureError(ToolkitError):
    """Network configuration whose spatial trace does not work out."""


class UndefinedMetricError(ToolkitError):
    """A metric was requested over an empty set."""


class EmptySetError(ToolkitError):
    """An operation that requires a non-empty feature set received an empty one."""


class InvalidInputError(ToolkitError):
    """Structurally invalid input (duplicate ids, bad matrix, empty case list)."""


class InvalidCaseError(ToolkitError):
    """A scoring case is unusable (e.g. empty ground-truth graph)."""


class ManifestParseError(ToolkitError):
    """A manifest line could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class FeatureFileError(ToolkitError):
    """A feature file is corrupt or truncated."""


class WorkdirLockedError(ToolkitError):
    """Another process holds the working-directory lock."""
