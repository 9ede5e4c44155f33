"""Exceptions and per-trajectory failure flags."""

import enum


class FincoError(Exception):
    """Base class for all errors raised by the package."""


class InputDomainError(FincoError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ContourError(FincoError, ValueError):
    """A time contour could not be constructed."""


class ConfigError(FincoError):
    """Invalid run configuration; `key` is the dotted path of the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class EmptyReconstruction(FincoError):
    """No valid sample survived to contribute to a reconstruction."""


class NoRoots(FincoError):
    """Newton root search converged from none of the seeds."""


class TrajectoryFlag(enum.IntFlag):
    """Reasons a trajectory or its reconstruction sample is excluded."""

    NONE = 0
    NONFINITE = 1
    STEP_COLLAPSE = 2
    KINETIC_ACTION = 4
    POTENTIAL_DIVERGENCE = 8
    NOISE = 16

