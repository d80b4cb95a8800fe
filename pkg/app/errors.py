"""Error types raised by the Loewner services.

Every error carries a ``diagnostics`` dict that the CLI writes out as JSON and
the HTTP layer returns in the response detail.
"""

from typing import Any, Optional


class LoewnerError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3
    status_code = 500

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "diagnostics": self.diagnostics,
        }


class InputError(LoewnerError):
    """The caller handed us something we refuse to compute on."""

    exit_code = 2
    status_code = 422


class NumericalError(LoewnerError):
    """A numerical procedure failed to meet its tolerance."""


# Input errors

class InvalidScaleError(InputError):
    pass


class InvalidCapacityError(InputError):
    pass


class InvalidWeightsError(InputError):
    pass


class InvalidMultiSlitError(InputError):
    """Raised with the full violation list from ``validate_multislit``."""

    def __init__(self, violations: list[str]):
        super().__init__(
            f"invalid multi-slit: {'; '.join(violations)}",
            {"violations": violations},
        )
        self.violations = violations


class IncompatibleInputsError(InputError):
    pass


class AmbiguousBoundaryError(InputError):
    pass


class HypothesisNotMetError(InputError):
    pass


# Numerical errors

class PointSwallowedError(NumericalError):
    pass


class NearSingularityError(NumericalError):
    pass


class RefineNeededError(NumericalError):
    pass


class FitFailureError(NumericalError):
    pass


class ExtensionError(NumericalError):
    pass


class BracketError(NumericalError):
    """Bisection bracket lost; ``diagnostics['sweep']`` holds the sampled curve."""


class IntegrationFailureError(NumericalError):
    pass
