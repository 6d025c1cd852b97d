"""Three-mirror ring cavity: reflection, loss coupling, linewidth, Q and finesse.

All public frequencies are in hertz (not angular); phases are radians.
Functions accept scalars or numpy arrays for the sideband frequency and
broadcast over them.  The mirrors R2 and R3 only enter through their
product, which also absorbs the intra-cavity round-trip loss.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy import constants

from src.errors import (
    LowFinesseError,
    NonphysicalReflectivityError,
    SingularCavityError,
    ZeroLinewidthError,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SPEED_OF_LIGHT = constants.c
#: 1064 nm Nd:YAG carrier.
DEFAULT_CARRIER_HZ = constants.c / 1064e-9
#: Denominator magnitude below which the cavity is treated as singular.
SINGULAR_TOLERANCE = 1e-12
#: Slack allowed on |r_c| <= 1 before a reflectivity is rejected.
REFLECTIVITY_TOLERANCE = 1e-9
#: Relative disagreement above which the high-Q linewidth approximation is flagged.
APPROXIMATION_TOLERANCE = 1e-3


@dataclass(frozen=True)
class RingCavity:
    """Immutable description of the cavity under test.

    Parameters
    ----------
    r1_sq : float
        Power reflectivity R1 of the input mirror, in (0, 1].
    r2r3_sq : float
        Product R2*R3 of the remaining mirrors with round-trip losses folded in.
    fsr_hz : float
        Free spectral range in hertz.
    carrier_hz : float
        Optical carrier frequency in hertz; only the quality factor uses it.
    t1 : float, optional
        Power transmission of the input mirror.  Defaults to ``1 - r1_sq``
        (lossless input mirror).
    """

    r1_sq: float
    r2r3_sq: float
    fsr_hz: float
    carrier_hz: float = DEFAULT_CARRIER_HZ
    t1: Optional[float] = field(default=None)

    def __post_init__(self) -> None:
        for name in ("r1_sq", "r2r3_sq", "fsr_hz", "carrier_hz"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not 0.0 < self.r1_sq <= 1.0:
            raise ValueError(f"r1_sq must lie in (0, 1], got {self.r1_sq!r}")
        if not 0.0 < self.r2r3_sq <= 1.0:
            raise ValueError(f"r2r3_sq must lie in (0, 1], got {self.r2r3_sq!r}")
        if self.fsr_hz <= 0.0:
            raise ValueError(f"fsr_hz must be positive, got {self.fsr_hz!r}")
        if self.carrier_hz <= 0.0:
            raise ValueError(f"carrier_hz must be positive, got {self.carrier_hz!r}")
        if self.t1 is None:
            object.__setattr__(self, "t1", 1.0 - self.r1_sq)
        if not math.isfinite(self.t1) or self.t1 < 0.0:
            raise ValueError(f"t1 must be a non-negative number, got {self.t1!r}")
        if self.t1 + self.r1_sq > 1.0 + 1e-12:
            raise ValueError(
                f"t1 + r1_sq must not exceed 1 (got {self.t1!r} + {self.r1_sq!r})"
            )

    @classmethod
    def from_amplitudes(
        cls,
        sqrt_r1: float,
        sqrt_r1r2r3: float,
        fsr_hz: float,
        carrier_hz: float = DEFAULT_CARRIER_HZ,
        t1: Optional[float] = None,
    ) -> "RingCavity":
        """Build a cavity from the amplitude pair the fit reports (√R1, √(R1R2R3))."""
        if not 0.0 < sqrt_r1 <= 1.0:
            raise ValueError(f"sqrt_r1 must lie in (0, 1], got {sqrt_r1!r}")
        if not 0.0 < sqrt_r1r2r3 <= 1.0:
            raise ValueError(f"sqrt_r1r2r3 must lie in (0, 1], got {sqrt_r1r2r3!r}")
        return cls(
            r1_sq=sqrt_r1 ** 2,
            r2r3_sq=(sqrt_r1r2r3 / sqrt_r1) ** 2,
            fsr_hz=fsr_hz,
            carrier_hz=carrier_hz,
            t1=t1,
        )

    @property
    def sqrt_r1(self) -> float:
        return math.sqrt(self.r1_sq)

    @property
    def round_trip_product(self) -> float:
        """R1*R2*R3."""
        return self.r1_sq * self.r2r3_sq

    @property
    def sqrt_r1r2r3(self) -> float:
        return math.sqrt(self.round_trip_product)

    @property
    def round_trip_length_m(self) -> float:
        """Round-trip optical path p = c / FSR."""
        return SPEED_OF_LIGHT / self.fsr_hz


@dataclass(frozen=True)
class Detuning:
    """Carrier detuning (ω0 − ωc)/2π in hertz.

    Negative values put the carrier below the cavity resonance, so the upper
    sidebands (+Ω) are the ones that fall inside the resonance.
    """

    omega_d_hz: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.omega_d_hz):
            raise ValueError(f"omega_d_hz must be finite, got {self.omega_d_hz!r}")

    def flipped(self) -> "Detuning":
        return Detuning(-self.omega_d_hz)


class Linewidth(NamedTuple):
    """FWHM linewidth in hertz, exact arcsine form and its high-Q approximation."""

    exact_hz: float
    approx_hz: float
    approximation_valid: bool


def impedance_matched_cavity(
    r1_sq: float,
    fsr_hz: float,
    carrier_hz: float = DEFAULT_CARRIER_HZ,
) -> RingCavity:
    """Cavity with R2*R3 = R1 and a lossless input mirror, so r_c vanishes on resonance."""
    return RingCavity(r1_sq=r1_sq, r2r3_sq=r1_sq, fsr_hz=fsr_hz, carrier_hz=carrier_hz)


def wrap_phase(phase: ArrayLike) -> ArrayLike:
    """Map a phase onto (−π, π]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(phase, dtype=float), 2.0 * np.pi)
    return wrapped if np.ndim(wrapped) else float(wrapped)


def phase_shifts(
    cavity: RingCavity,
    omega_d_hz: float,
    omega_hz: ArrayLike,
) -> Tuple[ArrayLike, ArrayLike]:
    """Return the carrier and sideband round-trip phases (φ_c, φ_s), wrapped to (−π, π]."""
    phi_c = wrap_phase(2.0 * np.pi * omega_d_hz / cavity.fsr_hz)
    phi_s = wrap_phase(2.0 * np.pi * np.asarray(omega_hz, dtype=float) / cavity.fsr_hz)
    return phi_c, phi_s


def reflection_coefficient(
    cavity: RingCavity,
    omega_d_hz: float,
    omega_hz: ArrayLike,
) -> Union[complex, np.ndarray]:
    """Complex amplitude reflection r_c(ω_d + Ω) of the cavity-coupled mode.

    Pass a negative ``omega_hz`` to evaluate the lower sideband r_c(ω_d − Ω).

    Raises
    ------
    SingularCavityError
        If the round-trip denominator is below :data:`SINGULAR_TOLERANCE`.
    """
    phi_c, phi_s = phase_shifts(cavity, omega_d_hz, omega_hz)
    round_trip = np.exp(-1j * (np.asarray(phi_c) + np.asarray(phi_s)))
    denominator = 1.0 - cavity.sqrt_r1r2r3 * round_trip
    if np.any(np.abs(denominator) < SINGULAR_TOLERANCE):
        raise SingularCavityError(
            "cavity round-trip denominator vanishes "
            f"(R1*R2*R3={cavity.round_trip_product!r} on resonance)"
        )
    r_c = cavity.sqrt_r1 - cavity.t1 * math.sqrt(cavity.r2r3_sq) * round_trip / denominator
    return r_c if np.ndim(r_c) else complex(r_c)


def loss_coupling_from_reflection(r_c: Union[complex, np.ndarray]) -> Union[float, np.ndarray]:
    """Vacuum coupling amplitude l_c = sqrt(1 − |r_c|²) for a given reflection."""
    power = np.abs(np.asarray(r_c)) ** 2
    if np.any(power > (1.0 + REFLECTIVITY_TOLERANCE) ** 2):
        raise NonphysicalReflectivityError(
            f"|r_c| exceeds unity (max |r_c| = {float(np.sqrt(np.max(power)))!r})"
        )
    l_c = np.sqrt(np.clip(1.0 - power, 0.0, None))
    return l_c if np.ndim(l_c) else float(l_c)


def loss_coupling(
    cavity: RingCavity,
    omega_d_hz: float,
    omega_hz: ArrayLike,
) -> Union[float, np.ndarray]:
    """Real vacuum coupling l_c(ω_d + Ω) through transmission and intra-cavity loss."""
    return loss_coupling_from_reflection(reflection_coefficient(cavity, omega_d_hz, omega_hz))


def _linewidth_argument(sqrt_product: float) -> float:
    return (1.0 - sqrt_product) / (2.0 * math.sqrt(sqrt_product))


def linewidth_from_amplitude(sqrt_r1r2r3: float, fsr_hz: float) -> Linewidth:
    """Linewidth for a round-trip amplitude √(R1R2R3) and FSR (both forms, hertz)."""
    if sqrt_r1r2r3 >= 1.0:
        raise ZeroLinewidthError("R1*R2*R3 = 1: lossless cavity has zero linewidth")
    if sqrt_r1r2r3 <= 0.0:
        raise ValueError(f"sqrt_r1r2r3 must be positive, got {sqrt_r1r2r3!r}")
    argument = _linewidth_argument(sqrt_r1r2r3)
    if argument > 1.0:
        raise LowFinesseError(
            f"arcsine argument {argument:.4g} > 1: resonance never reaches half maximum"
        )
    exact = (2.0 / math.pi) * fsr_hz * math.asin(argument)
    approx = (1.0 - sqrt_r1r2r3) / (math.pi * math.sqrt(sqrt_r1r2r3)) * fsr_hz
    valid = abs(exact - approx) <= APPROXIMATION_TOLERANCE * exact
    if not valid:
        logger.warning(
            "High-Q linewidth approximation is off by %.3g%% (exact=%.6g Hz, approx=%.6g Hz)",
            100.0 * abs(exact - approx) / exact,
            exact,
            approx,
        )
    return Linewidth(exact_hz=exact, approx_hz=approx, approximation_valid=valid)


def linewidth(cavity: RingCavity) -> Linewidth:
    """FWHM linewidth γ/2π of the cavity, exact and high-Q forms."""
    return linewidth_from_amplitude(cavity.sqrt_r1r2r3, cavity.fsr_hz)


def linewidth_derivative(sqrt_r1r2r3: float, fsr_hz: float) -> Tuple[float, float]:
    """Partial derivatives of the exact linewidth w.r.t. (√(R1R2R3), FSR)."""
    s = sqrt_r1r2r3
    argument = _linewidth_argument(s)
    d_argument = -(1.0 + s) / (4.0 * s ** 1.5)
    d_gamma_ds = (2.0 / math.pi) * fsr_hz * d_argument / math.sqrt(1.0 - argument ** 2)
    d_gamma_dfsr = (2.0 / math.pi) * math.asin(argument)
    return d_gamma_ds, d_gamma_dfsr


def quality_factor(cavity: RingCavity) -> float:
    """Q = ω0 / γ using the exact linewidth."""
    gamma = linewidth(cavity).exact_hz
    if gamma <= 0.0:
        raise ZeroLinewidthError("quality factor undefined for zero linewidth")
    return cavity.carrier_hz / gamma


def finesse_from_amplitude(sqrt_r1r2r3: float) -> float:
    if sqrt_r1r2r3 >= 1.0:
        raise ZeroLinewidthError("R1*R2*R3 = 1: finesse is infinite")
    return math.pi * math.sqrt(sqrt_r1r2r3) / (1.0 - sqrt_r1r2r3)


def finesse_derivative(sqrt_r1r2r3: float) -> float:
    """d finesse / d √(R1R2R3)."""
    s = sqrt_r1r2r3
    return math.pi * (1.0 + s) / (2.0 * math.sqrt(s) * (1.0 - s) ** 2)


def finesse(cavity: RingCavity) -> float:
    """Finesse π(R1R2R3)^{1/4} / (1 − √(R1R2R3))."""
    return finesse_from_amplitude(cavity.sqrt_r1r2r3)
