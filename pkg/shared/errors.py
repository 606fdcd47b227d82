"""Exception hierarchy shared by the numerical modules and the CLI.

Every error carries the name of the module that raised it so the CLI can
report provenance ("reduction: SingularMass ...") and map it to an exit code.
"""
from __future__ import annotations

from typing import Any, Optional


class RegularityError(Exception):
    """Base class for all domain errors."""

    module: str = "regularity"

    def __init__(self, message: str, *, module: Optional[str] = None, **details: Any) -> None:
        super().__init__(message)
        if module is not None:
            self.module = module
        self.details = details

    def __str__(self) -> str:
        return f"{type(self).__name__}: {self.args[0]}"


# --- geometry ---------------------------------------------------------------


class GeometryError(RegularityError):
    module = "geometry"


class UnsupportedDimension(GeometryError):
    pass


class InvalidOrder(GeometryError):
    pass


class EvaluationFailure(GeometryError):
    pass


class StepTooLarge(GeometryError):
    pass


# --- coefficients -----------------------------------------------------------


class CoefficientError(RegularityError):
    module = "coefficients"


class NotSquareDini(CoefficientError):
    pass


class NotMonotone(CoefficientError):
    pass


class VanishingConditionFailed(CoefficientError):
    pass


class EllipticityViolation(CoefficientError):
    pass


class OscillationViolation(CoefficientError):
    """Raised with the worst sample in ``details`` (keys ``r``, ``theta``, ``excess``)."""


class NotNormalized(CoefficientError):
    pass


class DimensionMismatch(CoefficientError):
    pass


# --- reduction --------------------------------------------------------------


class ReductionError(RegularityError):
    module = "reduction"


class SingularMass(ReductionError):
    pass


class NonInvertibleA(ReductionError):
    pass


# --- stability --------------------------------------------------------------


class StabilityError(RegularityError):
    module = "stability"


class IntegrationFailure(StabilityError):
    pass


class ToleranceNotMet(StabilityError):
    pass


class GridTooShallow(StabilityError):
    pass


class WrongDimension(StabilityError):
    pass


class ForcingRejected(StabilityError):
    pass


# --- kernel -----------------------------------------------------------------


class KernelError(RegularityError):
    module = "kernel"


class OriginSingularity(KernelError):
    pass


class CoincidentPoints(KernelError):
    pass


class RadiiEqual(KernelError):
    pass


class TruncationInsufficient(KernelError):
    pass


class QuadratureFailure(KernelError):
    pass


class InvalidParams(KernelError):
    pass


class HypothesisViolated(RegularityError):
    """Raised by kernel and oracle; ``module`` tells which."""


# --- oracle -----------------------------------------------------------------


class OracleError(RegularityError):
    module = "oracle"


class EllipticityLost(OracleError):
    pass


class RecessiveSelectionFailed(OracleError):
    pass


class RangeTooShort(OracleError):
    pass


# --- cli --------------------------------------------------------------------


class ConfigError(RegularityError):
    module = "cli"


class ConfigInvalid(ConfigError):
    pass
