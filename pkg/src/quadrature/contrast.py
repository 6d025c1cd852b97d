"""Photon number of squeezed light and the signal contrast of squeezed probing.

On an impedance-matched cavity the resonant sideband is fully transmitted,
so the detected variance collapses to (V1a + V2a)/4 + 1/2 in both
quadratures.  The contrasts compare that level to the off-resonance one.
"""
from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np

from src.cavity.ring import Detuning, RingCavity
from src.quadrature.spectrum import QuadratureSpectrum, spectrum
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel

logger = logging.getLogger(__name__)

#: dB per unit squeeze factor, 20·log10(e).
DB_PER_SQUEEZE_FACTOR = 20.0 * math.log10(math.e)


def squeezed_photon_number(squeeze_r: float, alpha: complex = 0.0, theta: float = 0.0) -> float:
    """Mean photon number of a displaced squeezed state.

    Parameters
    ----------
    squeeze_r : float
        Squeeze factor r >= 0.
    alpha : complex
        Coherent displacement.
    theta : float
        Squeezing angle in radians.
    """
    if squeeze_r < 0.0 or not math.isfinite(squeeze_r):
        raise ValueError(f"squeeze_r must be a non-negative number, got {squeeze_r!r}")
    alpha = complex(alpha)
    sinh_r = math.sinh(squeeze_r)
    cosh_r = math.cosh(squeeze_r)
    coherent = abs(alpha) ** 2 * (cosh_r ** 2 + sinh_r ** 2)
    # (α*)² e^{iθ} + α² e^{-iθ} = 2 Re(α² e^{-iθ})
    cross = 2.0 * (alpha ** 2 * np.exp(-1j * theta)).real * sinh_r * cosh_r
    return float(coherent - cross + sinh_r ** 2)


def squeeze_factor_from_db(db: float) -> float:
    """Squeeze factor r of a pure state whose squeezed quadrature sits at ``db`` (<= 0)."""
    if db > 0.0:
        raise ValueError(f"squeezed quadrature must be at or below shot noise, got {db!r} dB")
    return -db / DB_PER_SQUEEZE_FACTOR


def squeezing_db(squeeze_r: float) -> float:
    """Squeezed-quadrature level in dB for squeeze factor r."""
    if squeeze_r < 0.0:
        raise ValueError(f"squeeze_r must be non-negative, got {squeeze_r!r}")
    return -squeeze_r * DB_PER_SQUEEZE_FACTOR


def impedance_matched_variance(v1_a: float, v2_a: float) -> float:
    """Detected variance with one sideband fully transmitted: (V1a + V2a)/4 + 1/2."""
    _check_variances(v1_a, v2_a)
    return 0.25 * (v1_a + v2_a) + 0.5


def signal_contrast(v1_a: float, v2_a: float) -> Tuple[float, float]:
    """Return (S1, S2) for incident variances V1a (squeezed) and V2a (anti-squeezed)."""
    v_b = impedance_matched_variance(v1_a, v2_a)
    return v_b / v1_a, v2_a / v_b


def contrast_curves(
    v1_a: float,
    v2_a: float,
    cavity: RingCavity,
    detuning: Detuning,
    freqs_hz: np.ndarray,
) -> QuadratureSpectrum:
    """Reflected spectra of a flat input off ``cavity`` with ideal detection."""
    _check_variances(v1_a, v2_a)
    logger.debug("Contrast curves for V1a=%.4g, V2a=%.4g on %d points", v1_a, v2_a, np.size(freqs_hz))
    return spectrum(
        cavity,
        detuning,
        InputSqueezingModel.constant(v1_a, v2_a),
        DetectionModel.ideal(),
        freqs_hz,
    )


def _check_variances(v1_a: float, v2_a: float) -> None:
    if not (math.isfinite(v1_a) and math.isfinite(v2_a)) or v1_a <= 0.0 or v2_a <= 0.0:
        raise ValueError(f"variances must be positive, got V1a={v1_a!r}, V2a={v2_a!r}")
