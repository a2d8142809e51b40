"""Shared exception types."""


class HopkitError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


class InsufficientCandidatesError(HopkitError):
    pass


class SnapshotError(HopkitError):
    pass


class SplitSizeError(HopkitError):
    pass
