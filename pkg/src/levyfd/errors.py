"""Exception types raised across the package."""

from __future__ import annotations


class LevyFDError(Exception):
    """Base class for all package errors."""


class InvalidSpacingError(LevyFDError, ValueError):
    pass


class InvalidCellError(LevyFDError, ValueError):
    pass


class InvalidOffsetError(LevyFDError, ValueError):
    pass


class InvalidMeasureError(LevyFDError, ValueError):
    pass


class QuadratureError(LevyFDError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float, requested: float):
        super().__init__(f"{message} (achieved {achieved:.3e}, requested {requested:.3e})")
        self.achieved = achieved
        self.requested = requested


class TailTruncationError(LevyFDError, RuntimeError):
    def __init__(self, message: str, residual: float, index: int):
        super().__init__(f"{message} (residual tail mass {residual:.3e} at K={index})")
        self.residual = residual
        self.index = index


class SamplingError(LevyFDError, ValueError):
    def __init__(self, message: str, point: float):
        super().__init__(f"{message} at x={point!r}")
        self.point = point


class SpacingMismatchError(LevyFDError, ValueError):
    pass


class CoefficientError(LevyFDError, ValueError):
    def __init__(self, message: str, t: float, x: float):
        super().__init__(f"{message} at t={t!r}, x={x!r}")
        self.t = t
        self.x = x


class InstabilityError(LevyFDError, RuntimeError):
    pass


class StepSizeError(LevyFDError, RuntimeError):
    """The implicit step is too large for the estimated coercivity bound."""

    def __init__(self, message: str, threshold: float):
        super().__init__(message)
        self.threshold = threshold


class SolverError(LevyFDError, RuntimeError):
    def __init__(self, message: str, residuals: list[float]):
        final = residuals[-1] if residuals else float("nan")
        super().__init__(f"{message} (final residual {final:.3e})")
        self.residuals = residuals


class ConfigError(LevyFDError, ValueError):
    pass
