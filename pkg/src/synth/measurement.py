"""Synthetic spectrum-analyzer traces from the analytic quadrature model.

A trace point is the RBW-smoothed model variance plus Gaussian noise of
standard deviation √2·V/√N_eff, the single-shot spread of a measured
variance reduced by averaging.  Noise is drawn as one ``(2, n)`` block from
``default_rng(seed)``, row 0 for V1 and row 1 for V2, so each point's draw
is fixed by its grid index.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from src.cavity.ring import Detuning, RingCavity
from src.quadrature.spectrum import QuadratureSpectrum, spectrum
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel

logger = logging.getLogger(__name__)

#: Smallest variance a synthetic trace may hold after clipping.
VARIANCE_FLOOR = 1e-6
#: Relative slack on the half-window so grid points exactly rbw/2 away are included.
_WINDOW_SLACK = 1e-9


@dataclass(frozen=True)
class Spur:
    """Narrow Gaussian instrument artifact added to both quadratures."""

    center_hz: float
    height_linear: float
    width_hz: float

    def __post_init__(self) -> None:
        if self.width_hz <= 0.0:
            raise ValueError(f"spur width_hz must be positive, got {self.width_hz!r}")
        if self.height_linear < 0.0:
            raise ValueError(f"spur height_linear must be non-negative, got {self.height_linear!r}")

    def evaluate(self, freqs_hz: np.ndarray) -> np.ndarray:
        return self.height_linear * np.exp(
            -0.5 * ((np.asarray(freqs_hz) - self.center_hz) / self.width_hz) ** 2
        )


@dataclass(frozen=True)
class MeasurementConfig:
    """Spectrum analyzer settings.

    Parameters
    ----------
    rbw_hz : float
        Resolution bandwidth.
    n_averages : int
        Number of averaged sweeps.
    spur : Spur, optional
        Instrument artifact added to both quadratures.
    seed : int
        Seed of the noise stream.
    n_eff : float, optional
        Effective number of independent averages; defaults to ``n_averages``.
        ``math.inf`` gives a noiseless trace.
    """

    rbw_hz: float = 100e3
    n_averages: int = 100
    spur: Optional[Spur] = None
    seed: int = 0
    n_eff: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.rbw_hz > 0.0:
            raise ValueError(f"rbw_hz must be positive, got {self.rbw_hz!r}")
        if self.n_averages < 1:
            raise ValueError(f"n_averages must be at least 1, got {self.n_averages!r}")
        if self.n_eff is not None and not self.n_eff > 0.0:
            raise ValueError(f"n_eff must be positive, got {self.n_eff!r}")

    @property
    def effective_averages(self) -> float:
        return float(self.n_eff if self.n_eff is not None else self.n_averages)


def _boxcar(freqs: np.ndarray, values: np.ndarray, rbw_hz: float) -> np.ndarray:
    half = 0.5 * rbw_hz * (1.0 + _WINDOW_SLACK)
    lo = np.searchsorted(freqs, freqs - half, side="left")
    hi = np.searchsorted(freqs, freqs + half, side="right")
    cumulative = np.concatenate(([0.0], np.cumsum(values)))
    return (cumulative[hi] - cumulative[lo]) / (hi - lo)


def rbw_smooth(measured: QuadratureSpectrum, rbw_hz: float) -> QuadratureSpectrum:
    """Moving boxcar of full width ``rbw_hz`` over both variance arrays.

    Windows are truncated at the grid ends.  Sigmas are passed through.
    """
    if not rbw_hz > 0.0:
        raise ValueError(f"rbw_hz must be positive, got {rbw_hz!r}")
    freqs = measured.freqs_hz
    return replace(
        measured,
        v1=_boxcar(freqs, measured.v1, rbw_hz),
        v2=_boxcar(freqs, measured.v2, rbw_hz),
    )


def _noise_std(mean: np.ndarray, n_eff: float) -> np.ndarray:
    if math.isinf(n_eff):
        return np.zeros_like(mean)
    return math.sqrt(2.0) * mean / math.sqrt(n_eff)


def synthesize_trace(
    cavity: RingCavity,
    detuning: Detuning,
    squeezing: InputSqueezingModel,
    detection: DetectionModel,
    config: MeasurementConfig,
    freqs_hz: np.ndarray,
) -> QuadratureSpectrum:
    """Noisy analyzer trace with model standard deviations in ``sigma1``/``sigma2``."""
    analytic = spectrum(cavity, detuning, squeezing, detection, freqs_hz)
    mean_v1, mean_v2 = expected_trace(analytic, config)
    n_eff = config.effective_averages
    sigma1 = _noise_std(mean_v1, n_eff)
    sigma2 = _noise_std(mean_v2, n_eff)

    rng = np.random.default_rng(config.seed)
    noise = rng.standard_normal((2, mean_v1.size))
    v1 = mean_v1 + sigma1 * noise[0]
    v2 = mean_v2 + sigma2 * noise[1]

    clipped = int(np.count_nonzero(v1 < VARIANCE_FLOOR) + np.count_nonzero(v2 < VARIANCE_FLOOR))
    if clipped:
        logger.warning("Clipped %d synthetic variance values to %.1g", clipped, VARIANCE_FLOOR)
    v1 = np.clip(v1, VARIANCE_FLOOR, None)
    v2 = np.clip(v2, VARIANCE_FLOOR, None)

    logger.debug(
        "Synthesized %d points (rbw=%.4g Hz, n_eff=%.4g, seed=%d)",
        mean_v1.size, config.rbw_hz, n_eff, config.seed,
    )
    return QuadratureSpectrum(
        freqs_hz=analytic.freqs_hz, v1=v1, v2=v2, sigma1=sigma1, sigma2=sigma2
    )


def expected_trace(
    analytic: QuadratureSpectrum, config: MeasurementConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free analyzer reading: spur added, then RBW-smoothed."""
    v1 = analytic.v1
    v2 = analytic.v2
    if config.spur is not None:
        bump = config.spur.evaluate(analytic.freqs_hz)
        v1 = v1 + bump
        v2 = v2 + bump
    smoothed = rbw_smooth(replace(analytic, v1=v1, v2=v2), config.rbw_hz)
    return smoothed.v1, smoothed.v2
