"""Exception hierarchy shared by every package under ``src``.

Model code raises the narrow subclasses below; the command line maps the
three families (model/config, fit, trace I/O) onto distinct exit codes.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple


class CavityProbeError(Exception):
    """Base class for all errors raised by this project."""
    pass


class ModelError(CavityProbeError, ValueError):
    """Raised when a physical model is evaluated outside its domain."""
    pass


class SingularCavityError(ModelError):
    """The cavity round-trip denominator vanishes (lossless cavity on resonance)."""
    pass


class NonphysicalReflectivityError(ModelError):
    """A reflection coefficient with magnitude above unity was supplied."""
    pass


class ZeroLinewidthError(ModelError):
    """The cavity is lossless, so linewidth, Q and finesse are undefined."""
    pass


class LowFinesseError(ModelError):
    """The resonance never drops to half maximum; the arcsine linewidth is undefined."""
    pass


class NonphysicalTransferError(ModelError):
    """A two-photon transfer would add negative vacuum noise (not passive)."""
    pass


class HeisenbergViolationError(ModelError):
    """Input quadrature variances violate V1 * V2 >= 1."""
    pass


class InvalidCovarianceError(ModelError):
    """A sampling covariance is not positive definite."""
    pass


class FitError(CavityProbeError):
    """Base class for estimator failures."""
    pass


class FitSpecError(FitError, ValueError):
    """The fit specification is inconsistent (unknown, missing or out-of-bounds parameters)."""
    pass


class FitConvergenceError(FitError):
    """The least-squares iteration stopped without meeting its tolerances."""

    def __init__(self, message: str, n_evaluations: Optional[int] = None) -> None:
        super().__init__(message)
        self.n_evaluations = n_evaluations


class UnidentifiableParameterError(FitError):
    """The weighted Jacobian is singular; ``direction`` names the degenerate combination."""

    def __init__(
        self,
        message: str,
        direction: Sequence[Tuple[str, float]] = (),
    ) -> None:
        super().__init__(message)
        self.direction = list(direction)


class TraceFormatError(CavityProbeError, ValueError):
    """A trace file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(CavityProbeError, ValueError):
    """The run configuration failed validation."""
    pass
