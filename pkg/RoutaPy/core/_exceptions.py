"""Exception types raised through package.
"""
from __future__ import annotations


class RoutaPyError(Exception):
    """Base class for every domain error raised by RoutaPy."""


class ConfigError(RoutaPyError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class InstanceError(RoutaPyError, ValueError):
    """A `RoutingInstance` invariant does not hold."""


class InstanceParseError(RoutaPyError, ValueError):
    """Malformed instance document.

    Args:
        message (str): What went wrong
        line_number (int | None, optional): 1-based line of the offending text. Defaults to None.
    """
    def __init__(self, message:str, line_number:int|None=None) -> None:
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class UnsupportedFormatError(InstanceParseError):
    """The document is well formed but uses a format variant RoutaPy does not read."""


class GenerationError(RoutaPyError):
    """The generator could not place a node within its retry budget."""


class ContractViolationError(RoutaPyError):
    """A caller broke an operation precondition (infeasible action, terminal mask query, shape mismatch)."""


class IncompleteSolutionError(RoutaPyError):
    """A cost was requested for a solution that does not visit every customer exactly once."""


class TrainingError(RoutaPyError):
    """Non-finite loss or gradient during training."""


class CheckpointError(RoutaPyError):
    """Checkpoint version, dimension or content mismatch."""


class OracleSizeError(RoutaPyError):
    """Instance exceeds the exact solver size cap."""
