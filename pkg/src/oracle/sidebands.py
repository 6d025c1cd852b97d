"""Direct propagation of sideband second moments through the cavity.

The state at sideband frequency Ω is the 2x2 Hermitian moment matrix K of
the pair (a(Ω), a†(−Ω)).  Quadratures are a1 = a(Ω) + a†(−Ω) and
a2 = −i(a(Ω) − a†(−Ω)); vacuum is K = I/2 so that V1 = V2 = 1.  Nothing
here goes through the two-photon matrices, which makes it an independent
check of them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.cavity.ring import Detuning, RingCavity, loss_coupling_from_reflection, reflection_coefficient
from src.errors import InvalidCovarianceError
from src.quadrature.transfer import DetectionModel

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_QUADRATURE_TO_SIDEBAND = 0.5 * np.array([[1.0, 1j], [1.0, -1j]])
_AMPLITUDE_ROW = np.array([1.0, 1.0], dtype=complex)
_PHASE_ROW = np.array([-1j, 1j])
_VACUUM = 0.5 * np.eye(2, dtype=complex)
_HERMITIAN_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SidebandState:
    """Sideband moment matrices with shape ``(..., 2, 2)``.

    ``moments[..., 0, 0]`` is ⟨|a(Ω)|²⟩, ``moments[..., 0, 1]`` the
    correlation ⟨a(Ω) a(−Ω)⟩ between the two sidebands.
    """

    moments: np.ndarray

    def __post_init__(self) -> None:
        moments = np.asarray(self.moments, dtype=complex)
        if moments.shape[-2:] != (2, 2):
            raise InvalidCovarianceError(
                f"sideband moments must have trailing shape (2, 2), got {moments.shape}"
            )
        if not np.all(np.isfinite(moments)):
            raise InvalidCovarianceError("sideband moments must be finite")
        asymmetry = np.max(np.abs(moments - np.conj(np.swapaxes(moments, -1, -2))))
        scale = max(1.0, float(np.max(np.abs(moments))))
        if asymmetry > _HERMITIAN_TOLERANCE * scale:
            raise InvalidCovarianceError(
                f"sideband moments are not Hermitian (asymmetry {asymmetry:.3g})"
            )
        object.__setattr__(self, "moments", moments)
        v1, v2 = self.quadrature_variances()
        if np.any(v1 <= 0.0) or np.any(v2 <= 0.0):
            raise InvalidCovarianceError("sideband moments give non-positive quadrature variance")

    @classmethod
    def from_quadratures(cls, v1: ArrayLike, v2: ArrayLike) -> "SidebandState":
        """State with uncorrelated quadrature variances V1 and V2."""
        v1 = np.asarray(v1, dtype=float)
        v2 = np.asarray(v2, dtype=float)
        if np.any(v1 <= 0.0) or np.any(v2 <= 0.0):
            raise InvalidCovarianceError("quadrature variances must be positive")
        v1, v2 = np.broadcast_arrays(v1, v2)
        diagonal = np.zeros(v1.shape + (2, 2), dtype=complex)
        diagonal[..., 0, 0] = v1
        diagonal[..., 1, 1] = v2
        basis = _QUADRATURE_TO_SIDEBAND
        return cls(basis @ diagonal @ basis.conj().T)

    @classmethod
    def vacuum(cls) -> "SidebandState":
        return cls(_VACUUM.copy())

    @property
    def correlation(self) -> ArrayLike:
        """Sideband correlation ⟨a(Ω) a(−Ω)⟩, destroyed when only one sideband is resonant."""
        value = self.moments[..., 0, 1]
        return value if np.ndim(value) else complex(value)

    def quadrature_variances(self) -> Tuple[np.ndarray, np.ndarray]:
        v1 = np.einsum("i,...ij,j->...", _AMPLITUDE_ROW, self.moments, _AMPLITUDE_ROW.conj()).real
        v2 = np.einsum("i,...ij,j->...", _PHASE_ROW, self.moments, _PHASE_ROW.conj()).real
        return v1, v2


def _diag(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    first, second = np.broadcast_arrays(np.asarray(first, dtype=complex), np.asarray(second, dtype=complex))
    matrix = np.zeros(first.shape + (2, 2), dtype=complex)
    matrix[..., 0, 0] = first
    matrix[..., 1, 1] = second
    return matrix


def _sandwich(operator: np.ndarray, moments: np.ndarray) -> np.ndarray:
    return operator @ moments @ np.conj(np.swapaxes(operator, -1, -2))


def propagate_sidebands(
    cavity: RingCavity,
    detuning: Detuning,
    detection: DetectionModel,
    state: SidebandState,
    omega_hz: ArrayLike,
) -> SidebandState:
    """Detected sideband moments after cavity reflection, mode mismatch and efficiencies.

    The cavity-coupled and mode-mismatched parts see the same incident
    state; the two are orthogonal modes so their moments add with weights
    η_c and η_m, and the lost fraction η_l is replaced by vacuum.
    """
    r_upper = np.asarray(reflection_coefficient(cavity, detuning.omega_d_hz, omega_hz))
    r_lower = np.asarray(reflection_coefficient(cavity, detuning.omega_d_hz, -np.asarray(omega_hz)))
    l_upper = np.asarray(loss_coupling_from_reflection(r_upper))
    l_lower = np.asarray(loss_coupling_from_reflection(r_lower))

    reflect = _diag(r_upper, np.conj(r_lower))
    leak = _diag(l_upper, l_lower)
    coupled = _sandwich(reflect, state.moments) + _sandwich(leak, _VACUUM)

    r_m_sq = cavity.r1_sq
    mismatched = r_m_sq * state.moments + (1.0 - r_m_sq) * _VACUUM

    detected = (
        detection.eta_c * coupled
        + detection.eta_m * mismatched
        + detection.eta_l * _VACUUM
    )
    return SidebandState(detected)
