"""Monte Carlo oracle: sample sideband amplitudes and push them through the optics.

Seed to stream mapping: ``SeedSequence(seed).spawn(n_batches)`` gives one
child per batch, and each batch draws from ``default_rng(child)`` (PCG64)
in a fixed order: coupled input, mismatched input, the two leak vacua, the
mismatch leak vacuum and the detection-loss vacuum.  Results are pooled
in batch order so the output is identical for any ``n_jobs``.
"""
from __future__ import annotations

import logging
import math
from typing import List, NamedTuple, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.cavity.ring import Detuning, RingCavity, loss_coupling_from_reflection, reflection_coefficient
from src.errors import InvalidCovarianceError
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel

logger = logging.getLogger(__name__)

MIN_SAMPLES = 1000


class MonteCarloVariances(NamedTuple):
    v1: float
    v2: float
    stderr1: float
    stderr2: float


class _BatchSums(NamedTuple):
    count: int
    sum1: float
    sum_sq1: float
    sum2: float
    sum_sq2: float


def _complex_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """Circular complex Gaussian with E|z|² = 1."""
    draws = rng.standard_normal((2, size))
    return (draws[0] + 1j * draws[1]) / math.sqrt(2.0)


def _sideband_pair(rng: np.random.Generator, v1: float, v2: float, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sample (a(Ω), a†(−Ω)) for uncorrelated quadrature variances V1, V2."""
    quad1 = math.sqrt(v1) * _complex_normal(rng, size)
    quad2 = math.sqrt(v2) * _complex_normal(rng, size)
    return 0.5 * (quad1 + 1j * quad2), 0.5 * (quad1 - 1j * quad2)


def _run_batch(
    coefficients: dict,
    v1_a: float,
    v2_a: float,
    size: int,
    seed: np.random.SeedSequence,
) -> _BatchSums:
    rng = np.random.default_rng(seed)
    upper_c, lower_c = _sideband_pair(rng, v1_a, v2_a, size)
    upper_m, lower_m = _sideband_pair(rng, v1_a, v2_a, size)
    leak_upper, _ = _sideband_pair(rng, 1.0, 1.0, size)
    _, leak_lower = _sideband_pair(rng, 1.0, 1.0, size)
    mismatch_upper, mismatch_lower = _sideband_pair(rng, 1.0, 1.0, size)
    lost_upper, lost_lower = _sideband_pair(rng, 1.0, 1.0, size)

    c = coefficients
    coupled_upper = c["r_upper"] * upper_c + c["l_upper"] * leak_upper
    coupled_lower = np.conj(c["r_lower"]) * lower_c + c["l_lower"] * leak_lower
    mism_upper = c["r_m"] * upper_m + c["l_m"] * mismatch_upper
    mism_lower = c["r_m"] * lower_m + c["l_m"] * mismatch_lower

    # beamsplitter admixtures of the three detected channels
    detected_upper = c["sqrt_eta_c"] * coupled_upper + c["sqrt_eta_m"] * mism_upper + c["sqrt_eta_l"] * lost_upper
    detected_lower = c["sqrt_eta_c"] * coupled_lower + c["sqrt_eta_m"] * mism_lower + c["sqrt_eta_l"] * lost_lower

    power1 = np.abs(detected_upper + detected_lower) ** 2
    power2 = np.abs(-1j * (detected_upper - detected_lower)) ** 2
    return _BatchSums(
        count=size,
        sum1=float(np.sum(power1)),
        sum_sq1=float(np.sum(power1 ** 2)),
        sum2=float(np.sum(power2)),
        sum_sq2=float(np.sum(power2 ** 2)),
    )


def _split(n_samples: int, n_batches: int) -> List[int]:
    base, extra = divmod(n_samples, n_batches)
    return [base + (1 if index < extra else 0) for index in range(n_batches)]


def _pooled(total: int, sum_: float, sum_sq: float) -> Tuple[float, float]:
    mean = sum_ / total
    variance = max(sum_sq / total - mean ** 2, 0.0) * total / (total - 1)
    return mean, math.sqrt(variance / total)


def monte_carlo_variances(
    cavity: RingCavity,
    detuning: Detuning,
    squeezing: InputSqueezingModel,
    detection: DetectionModel,
    omega_hz: float,
    n_samples: int,
    seed: int,
    n_batches: int = 1,
    n_jobs: int = 1,
) -> MonteCarloVariances:
    """Sampled detected variances and their standard errors at one sideband frequency.

    Parameters
    ----------
    n_samples : int
        Total number of samples, at least 1000.
    seed : int
        Master seed; see the module docstring for the stream mapping.
    n_batches : int
        Number of independent batches; each gets its own spawned seed.
    n_jobs : int
        joblib workers used to run the batches.
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_SAMPLES}, got {n_samples}")
    if n_batches < 1 or n_batches > n_samples:
        raise ValueError(f"n_batches must lie in [1, n_samples], got {n_batches}")

    v1_grid, v2_grid = squeezing.variances(np.array([omega_hz]))
    v1_a, v2_a = float(v1_grid[0]), float(v2_grid[0])
    if not (v1_a > 0.0 and v2_a > 0.0) or v1_a * v2_a < 1.0 - 1e-12:
        raise InvalidCovarianceError(
            f"input covariance is not physical (V1={v1_a!r}, V2={v2_a!r})"
        )

    r_upper = complex(reflection_coefficient(cavity, detuning.omega_d_hz, omega_hz))
    r_lower = complex(reflection_coefficient(cavity, detuning.omega_d_hz, -omega_hz))
    coefficients = {
        "r_upper": r_upper,
        "r_lower": r_lower,
        "l_upper": float(loss_coupling_from_reflection(r_upper)),
        "l_lower": float(loss_coupling_from_reflection(r_lower)),
        "r_m": cavity.sqrt_r1,
        "l_m": math.sqrt(max(1.0 - cavity.r1_sq, 0.0)),
        "sqrt_eta_c": math.sqrt(detection.eta_c),
        "sqrt_eta_m": math.sqrt(detection.eta_m),
        "sqrt_eta_l": math.sqrt(detection.eta_l),
    }

    children = np.random.SeedSequence(seed).spawn(n_batches)
    sizes = _split(n_samples, n_batches)
    logger.debug(
        "Monte Carlo at %.6g Hz: %d samples in %d batches (seed=%d, n_jobs=%d)",
        omega_hz, n_samples, n_batches, seed, n_jobs,
    )
    batches = Parallel(n_jobs=n_jobs)(
        delayed(_run_batch)(coefficients, v1_a, v2_a, size, child)
        for size, child in zip(sizes, children)
    )

    total = sum(batch.count for batch in batches)
    v1, stderr1 = _pooled(total, sum(b.sum1 for b in batches), sum(b.sum_sq1 for b in batches))
    v2, stderr2 = _pooled(total, sum(b.sum2 for b in batches), sum(b.sum_sq2 for b in batches))
    return MonteCarloVariances(v1=v1, v2=v2, stderr1=stderr1, stderr2=stderr2)
