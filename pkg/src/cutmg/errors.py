"""Exception types raised by the solver library."""


class CutMGError(Exception):
    """Base class for library errors."""


class ConfigError(CutMGError, ValueError):
    """Invalid user configuration."""


class AssumptionError(CutMGError):
    """A geometric assumption on the level hierarchy is violated."""


class GeometryError(CutMGError):
    """Degenerate cut configuration."""


class SolverError(CutMGError):
    """A linear solver met a matrix it cannot handle (e.g. not SPD)."""
