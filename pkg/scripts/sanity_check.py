#!/usr/bin/env python
"""Quick numerical health check of the cavity and quadrature models.

Evaluates the configured cavity (γ, Q, finesse, exact vs high-Q linewidth),
checks the vacuum fixed point and compares the two-photon variances with
direct sideband propagation at a few frequencies.  Exits non-zero when any
check fails.
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import numpy as np

# Ensure the repository root is on the Python path when executed directly.
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.cavity.ring import finesse, linewidth, quality_factor  # noqa: E402
from src.config.load_config import load_run_config  # noqa: E402
from src.config.logging_config import setup_logging  # noqa: E402
from src.oracle.sidebands import SidebandState, propagate_sidebands  # noqa: E402
from src.quadrature.transfer import reflect_variances, transfer_at  # noqa: E402

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-10


def run_checks(config_path: str | None = None) -> list[str]:
    """Return a list of failure messages (empty when everything passes)."""
    config = load_run_config(config_path)
    cavity = config.cavity.to_cavity()
    detuning = config.detuning.to_detuning()
    detection = config.detection.to_detection()
    squeezing = config.squeezing.to_model()
    failures: list[str] = []

    width = linewidth(cavity)
    print(f"gamma = {width.exact_hz / 1e3:.2f} kHz (high-Q form {width.approx_hz / 1e3:.2f} kHz)")
    print(f"Q = {quality_factor(cavity):.4g}, finesse = {finesse(cavity):.1f}")
    if not width.approximation_valid:
        failures.append("high-Q linewidth approximation disagrees with the exact form")

    freqs = np.array([1e6, abs(detuning.omega_d_hz), 15e6])
    transfer = transfer_at(cavity, detuning, freqs)
    vac1, vac2 = reflect_variances(transfer, detection, 1.0, 1.0)
    if not (np.allclose(vac1, 1.0, rtol=0, atol=1e-12) and np.allclose(vac2, 1.0, rtol=0, atol=1e-12)):
        failures.append("vacuum input does not map to vacuum output")

    v1_a, v2_a = squeezing.variances(freqs)
    v1_b, v2_b = reflect_variances(transfer, detection, v1_a, v2_a)
    oracle = propagate_sidebands(
        cavity, detuning, detection, SidebandState.from_quadratures(v1_a, v2_a), freqs
    )
    o1, o2 = oracle.quadrature_variances()
    worst = float(max(np.max(np.abs(o1 / v1_b - 1.0)), np.max(np.abs(o2 / v2_b - 1.0))))
    print(f"two-photon vs sideband propagation: max relative difference {worst:.2e}")
    if worst > ORACLE_TOLERANCE:
        failures.append(f"two-photon model disagrees with sideband propagation ({worst:.2e})")
    return failures


def main() -> None:
    """Run the sanity checks."""
    setup_logging()
    failures = run_checks(sys.argv[1] if len(sys.argv) > 1 else None)
    for failure in failures:
        logger.error(failure)
    if failures:
        sys.exit(1)
    print("Sanity check passed.")


if __name__ == "__main__":
    main()
