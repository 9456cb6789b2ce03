"""Exception hierarchy. The CLI maps each family onto an exit code."""

from __future__ import annotations


class SdpError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 3


class ModelError(SdpError, ValueError):
    """Malformed input: bad distributions, open ends, documents or configs."""

    exit_code = 1

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ArityError(ModelError):
    """Two sub-diagrams do not type-match."""


class ResourceCapError(SdpError):
    """An iteration or dimension cap was hit; ``achieved`` carries partial results."""

    exit_code = 2

    def __init__(self, message: str, achieved: object = None):
        self.achieved = achieved
        super().__init__(message)


class InvariantError(SdpError, AssertionError):
    """An internal soundness invariant was violated."""

    exit_code = 3
