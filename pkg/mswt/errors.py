"""
Exception hierarchy shared by every stage of the pipeline.

Each exception carries the process exit code the command line maps it to.
"""


class MSWTError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class ValidationError(MSWTError):
    """Invalid input: configuration, shapes, ranges or file contents."""

    exit_code = 2


class DimensionError(ValidationError):
    """Tensor extents do not fit the operation."""


class ConfigError(ValidationError):
    """A configuration value violates an invariant or the key is unknown."""


class InstabilityError(MSWTError):
    """A non-finite value appeared in training, rollout or the solver.

    ``index`` is the iteration or time step at which it was detected and
    ``parameter`` names the offending weight tensor when there is one.
    """

    exit_code = 3

    def __init__(self, message, index=None, parameter=None):
        super().__init__(message)
        self.index = index
        self.parameter = parameter


class FieldFormatError(MSWTError):
    """A binary file could not be read or written.

    ``code`` distinguishes the failure: ``bad-magic``, ``truncated-payload``,
    ``unsupported-dtype``, ``unsupported-version`` or ``empty-extent``.
    """

    exit_code = 4

    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class TapeError(MSWTError):
    """The differentiation tape was used out of order."""
