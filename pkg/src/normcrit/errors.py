"""Exception types shared by the solvers and the command line."""

from __future__ import annotations


class NormcritError(Exception):
    """Base class; ``exit_code`` is what the command line returns."""

    exit_code = 1


class ConfigError(NormcritError):
    exit_code = 2


class NoConvergence(NormcritError):
    exit_code = 3


class BallExit(NoConvergence):
    """Descent left the enlarged kinetic ball around the minimizer."""


class FellToMinimizer(NoConvergence):
    """Mountain-pass iterate dropped below the small-ball level."""


class NoPminus(NoConvergence):
    """A pair whose fiber has no strict local maximum."""


class LevelViolation(NormcritError):
    exit_code = 4


class ScanViolation(NormcritError):
    exit_code = 5


class ResolutionError(ValueError, NormcritError):
    """Grid too coarse for the requested profile."""


class SearchFailure(NormcritError):
    pass


class NoInteriorMax(NormcritError):
    pass


class FitFailure(NormcritError):
    pass
