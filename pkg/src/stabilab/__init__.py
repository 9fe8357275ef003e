"""Numerical laboratory for open-loop stabilizability of fractional heat-type semigroups."""

from .errors import BranchCutError, ConfigError, InfeasibleError, PreconditionError, StabilabError

__all__ = [
    "BranchCutError",
    "ConfigError",
    "InfeasibleError",
    "PreconditionError",
    "StabilabError",
]

__version__ = "0.1.0"
