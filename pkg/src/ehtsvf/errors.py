"""Exception hierarchy shared by every module of the toolkit."""


class HistoryError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(HistoryError, ValueError):
    """Operand shapes are incompatible."""


class CapacityError(HistoryError):
    """A Kronecker product would exceed the configured dimension limit."""


class IncompatibilityError(HistoryError, ValueError):
    """Two objects do not share a grid, direction pattern or factor layout."""


class DegeneracyError(HistoryError, ArithmeticError):
    """A norm vanished where a non-zero one is required."""


class ImpossiblePostselectionError(DegeneracyError):
    """Pre- and post-selection cannot both be satisfied."""


class RepresentabilityError(HistoryError, ValueError):
    """A history slot is not a rank-1 projector and has no multi-time state."""


class FactorizationError(HistoryError, ValueError):
    """A bridging operator does not split across the requested subsystem cut."""
