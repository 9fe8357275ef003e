"""Exception types shared across the package.

The CLI maps these onto exit codes: precondition problems exit with 2,
infeasibility reports with 3.
"""


class StabilabError(Exception):
    """Base class for all package errors."""


class PreconditionError(StabilabError, ValueError):
    """An operation was called outside its admissible parameter range."""


class ConfigError(PreconditionError):
    """A run configuration could not be parsed or validated."""


class BranchCutError(PreconditionError):
    """The fractional power hit the negative real axis."""


class InfeasibleError(StabilabError):
    """A requested target cannot be met with the given data."""
