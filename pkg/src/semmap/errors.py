"""Exception types shared across the package."""


class SemmapError(Exception):
    """Base class for all semmap errors."""


class NonPositiveDepth(SemmapError):
    pass


class PixelOutOfBounds(SemmapError):
    pass


class BehindCamera(SemmapError):
    pass


class CellOutOfGrid(SemmapError):
    pass


class InfeasiblePlacement(SemmapError):
    pass


class NoFreeSpace(SemmapError):
    pass


class DimsNotDivisible(SemmapError):
    pass


class GridMismatch(SemmapError):
    pass


class EmptyObservation(SemmapError):
    pass


class EmptyInput(SemmapError):
    pass


class NoObservations(SemmapError):
    pass


class NoPath(SemmapError):
    pass


class StartBlocked(SemmapError):
    pass


class EmptyTable(SemmapError):
    pass


class LengthMismatch(SemmapError):
    pass


class FormatError(SemmapError):
    """Malformed file content for one of the SMAP* formats."""
