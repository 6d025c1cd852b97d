"""Two-photon transfer through the detuned cavity and the detection chain.

The reflected field is written in the quadrature basis of the carrier's
rotating frame.  Per sideband frequency the cavity acts as

    M = e^{iφ−} [[A+ cos φ+ + i A− sin φ+,  i A− cos φ+ − A+ sin φ+],
                 [A+ sin φ+ − i A− cos φ+,  A+ cos φ+ + i A− sin φ+]]

on the cavity-coupled quadratures, and ``H`` (same layout, built from l±
with no phase) couples the vacuum that leaks in through transmission and
loss.  Variances are in shot-noise units, so vacuum is exactly 1.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.cavity.ring import (
    Detuning,
    RingCavity,
    loss_coupling_from_reflection,
    reflection_coefficient,
)
from src.errors import NonphysicalTransferError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

#: Slack on the vacuum-fill coefficient before a transfer counts as active.
PASSIVITY_TOLERANCE = 1e-12
#: Slack allowed when renormalising detection efficiencies.
EFFICIENCY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TwoPhotonTransfer:
    """Quadrature transfer coefficients at one or many sideband frequencies.

    Every field is either a float or a numpy array broadcast over the
    frequency grid, except ``r_m`` which is a scalar.
    """

    phi_minus: ArrayLike
    phi_plus: ArrayLike
    a_plus: ArrayLike
    a_minus: ArrayLike
    l_plus: ArrayLike
    l_minus: ArrayLike
    r_m: float

    @property
    def cavity_matrix(self) -> np.ndarray:
        """The matrix M with shape ``(..., 2, 2)``."""
        phase = np.exp(1j * np.asarray(self.phi_minus))
        cos_p = np.cos(self.phi_plus)
        sin_p = np.sin(self.phi_plus)
        a_p = np.asarray(self.a_plus)
        a_m = np.asarray(self.a_minus)
        diagonal = a_p * cos_p + 1j * a_m * sin_p
        upper = 1j * a_m * cos_p - a_p * sin_p
        lower = a_p * sin_p - 1j * a_m * cos_p
        return phase[..., None, None] * np.stack(
            [np.stack([diagonal, upper], axis=-1), np.stack([lower, diagonal], axis=-1)],
            axis=-2,
        )

    @property
    def loss_matrix(self) -> np.ndarray:
        """The matrix H with shape ``(..., 2, 2)``."""
        l_p = np.asarray(self.l_plus, dtype=complex)
        l_m = np.asarray(self.l_minus, dtype=complex)
        return np.stack(
            [np.stack([l_p, 1j * l_m], axis=-1), np.stack([-1j * l_m, l_p], axis=-1)],
            axis=-2,
        )

    @property
    def passivity(self) -> ArrayLike:
        """A+² + A−², which never exceeds one for a passive cavity."""
        return np.asarray(self.a_plus) ** 2 + np.asarray(self.a_minus) ** 2


@dataclass(frozen=True)
class DetectionModel:
    """Composite detection efficiencies for the coupled and mismatched modes.

    ``eta_l`` defaults to the remainder ``1 - eta_c - eta_m``.  The three
    values are renormalised so they sum to exactly one.
    """

    eta_c: float
    eta_m: float = 0.0
    eta_l: Optional[float] = None

    def __post_init__(self) -> None:
        eta_l = self.eta_l
        if eta_l is None:
            eta_l = max(1.0 - self.eta_c - self.eta_m, 0.0)
        for name, value in (("eta_c", self.eta_c), ("eta_m", self.eta_m), ("eta_l", eta_l)):
            if not math.isfinite(value) or not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        total = self.eta_c + self.eta_m + eta_l
        if total <= 0.0:
            raise ValueError("detection efficiencies cannot all be zero")
        if abs(total - 1.0) > EFFICIENCY_TOLERANCE:
            logger.debug("Renormalising detection efficiencies (sum was %.12g)", total)
        object.__setattr__(self, "eta_c", self.eta_c / total)
        object.__setattr__(self, "eta_m", self.eta_m / total)
        object.__setattr__(self, "eta_l", eta_l / total)

    @classmethod
    def from_budget(
        cls,
        homodyne_efficiency: float,
        quantum_efficiency: float,
        mismatch_homodyne_efficiency: float = 0.0,
    ) -> "DetectionModel":
        """Combine homodyne visibility and photodiode quantum efficiency.

        Parameters
        ----------
        homodyne_efficiency : float
            Homodyne efficiency for the cavity-coupled mode.
        quantum_efficiency : float
            Photodiode quantum efficiency.
        mismatch_homodyne_efficiency : float
            Homodyne efficiency for the mode-mismatched part; zero ignores it.
        """
        eta_c = homodyne_efficiency * quantum_efficiency
        eta_m = mismatch_homodyne_efficiency * quantum_efficiency
        if eta_c + eta_m > 1.0 + EFFICIENCY_TOLERANCE:
            raise ValueError(
                f"efficiency budget exceeds unity (eta_c + eta_m = {eta_c + eta_m!r})"
            )
        return cls(eta_c=eta_c, eta_m=eta_m)

    @classmethod
    def ideal(cls) -> "DetectionModel":
        return cls(eta_c=1.0, eta_m=0.0, eta_l=0.0)


def _canonical_phases(
    arg_upper: np.ndarray, arg_lower: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (φ−, φ+) with φ+ folded into [−π/2, π/2).

    Shifting φ+ and φ− together by π leaves M unchanged, which removes the
    2π ambiguity of the sideband arguments.
    """
    phi_plus = 0.5 * (arg_upper + arg_lower)
    phi_minus = 0.5 * (arg_upper - arg_lower)
    turns = np.floor(phi_plus / np.pi + 0.5)
    return phi_minus - turns * np.pi, phi_plus - turns * np.pi


def transfer_at(
    cavity: RingCavity,
    detuning: Detuning,
    omega_hz: ArrayLike,
) -> TwoPhotonTransfer:
    """Two-photon transfer coefficients at sideband frequency Ω (hertz).

    ``omega_hz`` may be a scalar or an array; the returned fields follow its shape.
    """
    omega = np.asarray(omega_hz, dtype=float)
    r_upper = np.asarray(reflection_coefficient(cavity, detuning.omega_d_hz, omega))
    r_lower = np.asarray(reflection_coefficient(cavity, detuning.omega_d_hz, -omega))
    l_upper = np.asarray(loss_coupling_from_reflection(r_upper))
    l_lower = np.asarray(loss_coupling_from_reflection(r_lower))

    phi_minus, phi_plus = _canonical_phases(np.angle(r_upper), np.angle(r_lower))
    mag_upper = np.abs(r_upper)
    mag_lower = np.abs(r_lower)

    def _out(value: np.ndarray) -> ArrayLike:
        return value if np.ndim(value) else float(value)

    return TwoPhotonTransfer(
        phi_minus=_out(phi_minus),
        phi_plus=_out(phi_plus),
        a_plus=_out(0.5 * (mag_upper + mag_lower)),
        a_minus=_out(0.5 * (mag_upper - mag_lower)),
        l_plus=_out(0.5 * (l_upper + l_lower)),
        l_minus=_out(0.5 * (l_upper - l_lower)),
        r_m=cavity.sqrt_r1,
    )


def _cavity_weights(transfer: TwoPhotonTransfer) -> Tuple[np.ndarray, ...]:
    """|M_ij|² for the four matrix entries."""
    cos_sq = np.cos(transfer.phi_plus) ** 2
    sin_sq = np.sin(transfer.phi_plus) ** 2
    a_p_sq = np.asarray(transfer.a_plus) ** 2
    a_m_sq = np.asarray(transfer.a_minus) ** 2
    w11 = cos_sq * a_p_sq + sin_sq * a_m_sq
    w12 = cos_sq * a_m_sq + sin_sq * a_p_sq
    w21 = sin_sq * a_p_sq + cos_sq * a_m_sq
    w22 = sin_sq * a_m_sq + cos_sq * a_p_sq
    return w11, w12, w21, w22


def _vacuum_fill(transfer: TwoPhotonTransfer, detection: DetectionModel) -> np.ndarray:
    fill = (
        1.0
        - detection.eta_c * transfer.passivity
        - detection.eta_m * transfer.r_m ** 2
    )
    if np.any(fill < -PASSIVITY_TOLERANCE):
        raise NonphysicalTransferError(
            f"transfer adds negative vacuum noise (fill coefficient {float(np.min(fill)):.3g})"
        )
    return np.clip(fill, 0.0, None)


def _check_positive(name: str, value: ArrayLike) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(array)) or np.any(array <= 0.0):
        raise ValueError(f"{name} must be positive and finite")
    return array


def reflect_variances_split(
    transfer: TwoPhotonTransfer,
    detection: DetectionModel,
    coupled: Tuple[ArrayLike, ArrayLike],
    mismatched: Tuple[ArrayLike, ArrayLike],
) -> Tuple[ArrayLike, ArrayLike]:
    """Detected variances with distinct inputs for the coupled and mismatched modes.

    Parameters
    ----------
    coupled : (V1, V2)
        Incident variances of the cavity-coupled mode.
    mismatched : (V1, V2)
        Incident variances of the mode-mismatched part, which is promptly
        reflected with amplitude ``r_m``.
    """
    v1_c, v2_c = (_check_positive("coupled variance", v) for v in coupled)
    v1_m, v2_m = (_check_positive("mismatched variance", v) for v in mismatched)
    w11, w12, w21, w22 = _cavity_weights(transfer)
    fill = _vacuum_fill(transfer, detection)
    prompt = detection.eta_m * transfer.r_m ** 2
    v1_b = detection.eta_c * (w11 * v1_c + w12 * v2_c) + prompt * v1_m + fill
    v2_b = detection.eta_c * (w21 * v1_c + w22 * v2_c) + prompt * v2_m + fill
    if np.ndim(v1_b) == 0:
        return float(v1_b), float(v2_b)
    return v1_b, v2_b


def reflect_variances(
    transfer: TwoPhotonTransfer,
    detection: DetectionModel,
    v1_a: ArrayLike,
    v2_a: ArrayLike,
) -> Tuple[ArrayLike, ArrayLike]:
    """Detected quadrature variances (V1b, V2b) for incident variances (V1a, V2a)."""
    return reflect_variances_split(transfer, detection, (v1_a, v2_a), (v1_a, v2_a))
