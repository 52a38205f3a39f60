#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Error hierarchy

Every failure raised by the simulator derives from EVMError so the CLI can
turn it into a machine-readable trailer.
"""

from typing import Any, Dict, Optional


class EVMError(Exception):
    """Base class for all simulator errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for the JSON summary trailer"""
        return {
            "class": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class SingularMetric(EVMError):
    """Metric is singular or not positive definite at some sample."""


class LapsePositivityViolation(EVMError):
    """Lapse left the admissible range 0 < N <= 3 + tol."""


class ShiftTooLarge(EVMError):
    """Shift is superluminal, |X/N|_g >= 1."""


class SupportOverflow(EVMError):
    """Distribution reached the two outermost lattice shells."""


class GaugeProjectionFailed(EVMError):
    """Slice-adapted gauge projection did not converge."""


class EllipticSolvabilityError(EVMError):
    """Right-hand side of a zero-mean elliptic problem has a nonzero mean."""


class SolverDiverged(EVMError):
    """Krylov or fixed-point iteration hit its iteration cap."""


class InvalidWeights(EVMError):
    """Energy weights violate the ordering constraints."""


class FitDomainError(EVMError):
    """Decay fit received too few samples or non-positive values."""


class StepSizeViolation(EVMError):
    """Time step exceeds the transport step-size guard."""


class ConfigError(EVMError):
    """Run configuration could not be loaded."""


class FrameChangeMismatch(EVMError):
    """Time components of the Faraday tensor disagree across the frame change."""
