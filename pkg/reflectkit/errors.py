"""Exception hierarchy for reflectkit.

Every error also derives from the builtin exception that best describes it,
so callers may catch either the package class or the builtin.
"""

from typing import Any, Optional


class ReflectKitError(Exception):
    """Base class for all reflectkit errors."""


class DimensionError(ReflectKitError, ValueError):
    """A vector or matrix does not match the ambient dimension."""


class HullInputError(ReflectKitError, ValueError):
    """Input to a convex-hull operation is not a list of unit vectors."""


class SingularObliquityError(ReflectKitError, ValueError):
    """An obliquity matrix is singular or numerically ill-conditioned."""


class InvarianceError(ReflectKitError, ValueError):
    """A constraint depends on a coordinate that was asked to be dropped."""

    def __init__(self, message: str, constraint_id: Optional[str] = None):
        super().__init__(message)
        self.constraint_id = constraint_id


class ConstraintValidityError(ReflectKitError, ValueError):
    """A constraint violates the gradient-floor requirement at an active point."""

    def __init__(self, message: str, constraint_id: Optional[str] = None):
        super().__init__(message)
        self.constraint_id = constraint_id


class ModelError(ReflectKitError, ValueError):
    """A model cannot be built or run as described."""


class StepFailure(ReflectKitError, ArithmeticError):
    """The projection sweeps of one time step did not reach feasibility."""

    def __init__(self, message: str, constraint_id: str, violation: float,
                 step_index: Optional[int] = None):
        super().__init__(message)
        self.constraint_id = constraint_id
        self.violation = violation
        self.step_index = step_index


class SimulationError(ReflectKitError, RuntimeError):
    """A simulation stopped early; ``partial`` holds what was computed."""

    def __init__(self, message: str, partial: Any = None,
                 cause: Optional[StepFailure] = None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


class SamplingError(ReflectKitError, RuntimeError):
    """A sampler could not produce the requested draws."""


class IntegrabilityError(ReflectKitError, RuntimeError):
    """Sampling refused because the measure is not known to be finite."""


class ConfigError(ReflectKitError, SyntaxError):
    """Malformed or invalid run configuration."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        text = f"line {lineno}: {message}" if lineno is not None else message
        super().__init__(text)
        self.lineno = lineno
        self.detail = message
