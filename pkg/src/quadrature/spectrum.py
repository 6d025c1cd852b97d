"""Quadrature spectra on a frequency grid and the dB helpers used around them."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np

from src.cavity.ring import Detuning, RingCavity
from src.errors import ModelError
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel, reflect_variances, transfer_at

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class QuadratureSpectrum:
    """Quadrature variances (vacuum = 1) on an ascending sideband grid.

    Parameters
    ----------
    freqs_hz : numpy.ndarray
        Strictly ascending sideband frequencies Ω/2π.
    v1, v2 : numpy.ndarray
        Positive variances of the two quadratures.
    sigma1, sigma2 : numpy.ndarray, optional
        Per-point standard deviations in the same units.
    """

    freqs_hz: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    sigma1: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        freqs = np.atleast_1d(np.asarray(self.freqs_hz, dtype=float))
        object.__setattr__(self, "freqs_hz", freqs)
        if freqs.size == 0:
            raise ValueError("spectrum grid must not be empty")
        if not np.all(np.isfinite(freqs)):
            raise ValueError("spectrum frequencies must be finite")
        if np.any(np.diff(freqs) <= 0.0):
            raise ValueError("spectrum frequencies must be strictly ascending")
        for name in ("v1", "v2", "sigma1", "sigma2"):
            value = getattr(self, name)
            if value is None:
                continue
            array = np.atleast_1d(np.asarray(value, dtype=float))
            if array.shape != freqs.shape:
                raise ValueError(
                    f"{name} has {array.size} points but the grid has {freqs.size}"
                )
            if not np.all(np.isfinite(array)):
                raise ValueError(f"{name} must be finite")
            if name.startswith("v") and np.any(array <= 0.0):
                raise ValueError(f"{name} must be strictly positive")
            if name.startswith("sigma") and np.any(array < 0.0):
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, array)
        if (self.sigma1 is None) != (self.sigma2 is None):
            raise ValueError("sigma1 and sigma2 must be given together")

    def __len__(self) -> int:
        return int(self.freqs_hz.size)

    @property
    def has_sigmas(self) -> bool:
        return self.sigma1 is not None

    def quadrature(self, index: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Variance and sigma arrays of quadrature 1 or 2."""
        if index == 1:
            return self.v1, self.sigma1
        if index == 2:
            return self.v2, self.sigma2
        raise ValueError(f"quadrature index must be 1 or 2, got {index!r}")

    def without_sigmas(self) -> "QuadratureSpectrum":
        return replace(self, sigma1=None, sigma2=None)


def to_db(v: ArrayLike) -> ArrayLike:
    """Variance in dB relative to shot noise, 10·log10(v)."""
    array = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(array)) or np.any(array <= 0.0):
        raise ValueError("to_db needs strictly positive finite values")
    db = 10.0 * np.log10(array)
    return db if np.ndim(db) else float(db)


def from_db(db: ArrayLike) -> ArrayLike:
    array = np.asarray(db, dtype=float)
    if np.any(~np.isfinite(array)):
        raise ValueError("from_db needs finite values")
    linear = np.power(10.0, array / 10.0)
    return linear if np.ndim(linear) else float(linear)


def _validate_grid(freqs_hz: ArrayLike) -> np.ndarray:
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    if freqs.ndim != 1 or freqs.size == 0:
        raise ValueError("frequency grid must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(freqs)):
        raise ValueError("frequency grid must be finite")
    if np.any(freqs < 0.0):
        raise ValueError("frequency grid must be non-negative")
    if np.any(np.diff(freqs) <= 0.0):
        raise ValueError("frequency grid must be strictly ascending")
    return freqs


def _evaluate(
    cavity: RingCavity,
    detuning: Detuning,
    squeezing: InputSqueezingModel,
    detection: DetectionModel,
    freqs: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    transfer = transfer_at(cavity, detuning, freqs)
    v1_a, v2_a = squeezing.variances(freqs)
    v1_b, v2_b = reflect_variances(transfer, detection, v1_a, v2_a)
    return np.atleast_1d(v1_b), np.atleast_1d(v2_b)


def spectrum(
    cavity: RingCavity,
    detuning: Detuning,
    squeezing: InputSqueezingModel,
    detection: DetectionModel,
    freqs_hz: ArrayLike,
) -> QuadratureSpectrum:
    """Noiseless detected spectrum (V1b, V2b) on a non-negative ascending grid.

    Model errors are re-raised with the index and frequency of the first
    offending grid point.
    """
    freqs = _validate_grid(freqs_hz)
    try:
        v1_b, v2_b = _evaluate(cavity, detuning, squeezing, detection, freqs)
    except ModelError as exc:
        for index, freq in enumerate(freqs):
            try:
                _evaluate(cavity, detuning, squeezing, detection, freqs[index:index + 1])
            except ModelError as point_exc:
                raise type(point_exc)(
                    f"grid index {index} ({freq:.6g} Hz): {point_exc}"
                ) from exc
        raise
    return QuadratureSpectrum(freqs_hz=freqs, v1=v1_b, v2=v2_b)


def uncoupled_variances(
    cavity: RingCavity,
    squeezing: InputSqueezingModel,
    detection: DetectionModel,
    freqs_hz: ArrayLike,
) -> Tuple[np.ndarray, np.ndarray]:
    """Detected variances far from resonance, where the cavity reflects both sidebands.

    Off resonance |r_c| tends to one with no quadrature rotation, so only
    detection efficiency and the mismatched fraction pull the input towards vacuum.
    """
    v1_a, v2_a = squeezing.variances(freqs_hz)
    kept = detection.eta_c + detection.eta_m * cavity.r1_sq
    return kept * v1_a + (1.0 - kept), kept * v2_a + (1.0 - kept)


def feature_center(
    measured: QuadratureSpectrum,
    baseline: Union[QuadratureSpectrum, ArrayLike],
) -> float:
    """Frequency where V1 departs furthest from the cavity-uncoupled baseline."""
    reference = baseline.v1 if isinstance(baseline, QuadratureSpectrum) else baseline
    reference = np.broadcast_to(np.asarray(reference, dtype=float), measured.v1.shape)
    index = int(np.argmax(np.abs(measured.v1 - reference)))
    return float(measured.freqs_hz[index])
