"""χ² profiles: hold one parameter on a grid and re-optimize the rest."""
from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.errors import CavityProbeError, FitError, FitSpecError
from src.estimator.fit import FitSpec, fit
from src.estimator.parameters import REFLECTIVITY_NAMES
from src.quadrature.spectrum import QuadratureSpectrum

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ["value", "chi2", "chi2_reduced", "converged", "error"]

#: Closest a shifted reflectivity start may come to 0 or 1.
_REFLECTIVITY_MARGIN = 1e-9

_Point = Tuple[Dict[str, object], Optional[Dict[str, float]]]


def shifted_start(start: Mapping[str, float], param: str, value: float, coordinates: str) -> Dict[str, float]:
    """Move a start point to ``param = value``.

    For the free spectral range the reflectivity losses are rescaled so
    (1 − r)·FSR, and with it the linewidth in hertz, stays fixed.  Other
    parameters are moved alone.
    """
    moved = dict(start)
    if param == "fsr_hz" and param in start:
        ratio = start[param] / value
        for name in REFLECTIVITY_NAMES[coordinates]:
            if name in moved:
                loss = (1.0 - moved[name]) * ratio
                moved[name] = min(max(1.0 - loss, _REFLECTIVITY_MARGIN), 1.0 - _REFLECTIVITY_MARGIN)
    moved[param] = float(value)
    return moved


def _pinned_spec(spec: FitSpec, param: str, value: float, start: Mapping[str, float]) -> FitSpec:
    floated = tuple(name for name in spec.float_params if name != param)
    fixed = dict(spec.fixed_params)
    fixed[param] = float(value)
    guess = {name: start[name] for name in floated}

    # keep the reflectivity product under the input mirror after pinning either one
    mirror, product = REFLECTIVITY_NAMES[spec.coordinates]
    if param == mirror and product in guess and guess[product] >= value:
        guess[product] = value * (1.0 - 1e-6)
    if param == product and mirror in guess and guess[mirror] <= value:
        guess[mirror] = min(value + 1e-6, 1.0 - 1e-9)
    return replace(spec, float_params=floated, fixed_params=fixed, initial_guess=guess)


def _profile_point(
    traces: QuadratureSpectrum, spec: FitSpec, param: str, value: float, start: Mapping[str, float]
) -> _Point:
    try:
        result = fit(traces, _pinned_spec(spec, param, value, start))
    except CavityProbeError as exc:
        logger.warning("Profile point %s=%.8g failed: %s", param, value, exc)
        row = {"value": value, "chi2": math.nan, "chi2_reduced": math.nan, "converged": False, "error": str(exc)}
        return row, None
    row = {
        "value": value,
        "chi2": result.chi2,
        "chi2_reduced": result.chi2_reduced,
        "converged": result.converged,
        "error": "",
    }
    solution = dict(result.estimates)
    solution[param] = value
    return row, solution


def _better(candidate: _Point, incumbent: _Point) -> bool:
    new_chi2 = candidate[0]["chi2"]
    old_chi2 = incumbent[0]["chi2"]
    if not math.isfinite(new_chi2):
        return False
    return not math.isfinite(old_chi2) or new_chi2 < old_chi2


def profile_identifiability(
    traces: QuadratureSpectrum,
    spec: FitSpec,
    param: str,
    grid: Sequence[float],
    n_jobs: Optional[int] = 1,
) -> pd.DataFrame:
    """χ² against ``param`` pinned at each grid value, all other floated parameters re-fit.

    Every grid point is fit twice: once from the full fit's solution (or
    ``spec.initial_guess`` when that fit fails) moved to the grid value, and
    once from the converged neighbour nearer the full-fit value, walking
    outward.  The lower χ² is kept.  A flat profile means the data do not
    determine ``param``.

    Returns
    -------
    pandas.DataFrame
        Columns ``value``, ``chi2``, ``chi2_reduced``, ``converged``, ``error``.
    """
    if param not in spec.float_params:
        raise FitSpecError(f"cannot profile {param!r}: it is not floated")
    if len(spec.float_params) < 2:
        raise FitSpecError("profiling needs at least one other floated parameter")
    values = np.asarray(grid, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise FitSpecError("profile grid must be a non-empty 1-D sequence")

    start = spec.start_values()
    try:
        full = fit(traces, spec)
        start.update(full.estimates)
    except FitError as exc:
        logger.warning("Full fit failed before profiling %s (%s); starting from the initial guess", param, exc)

    logger.info("Profiling %s over %d points", param, values.size)
    points: List[_Point] = Parallel(n_jobs=n_jobs)(
        delayed(_profile_point)(
            traces, spec, param, float(value), shifted_start(start, param, float(value), spec.coordinates)
        )
        for value in values
    )

    # walk outward from the full-fit value, restarting each point from its nearest finished neighbour
    order = np.argsort(np.abs(values - start[param]), kind="stable")
    done: List[int] = []
    for index in order:
        finished = [j for j in done if points[j][1] is not None]
        if finished:
            neighbour = min(finished, key=lambda j: abs(values[j] - values[index]))
            restart = shifted_start(points[neighbour][1], param, float(values[index]), spec.coordinates)
            candidate = _profile_point(traces, spec, param, float(values[index]), restart)
            if _better(candidate, points[index]):
                logger.debug("Profile point %s=%.8g improved by restarting from its neighbour", param, values[index])
                points[index] = candidate
        done.append(int(index))
    return pd.DataFrame([row for row, _ in points], columns=PROFILE_COLUMNS)
