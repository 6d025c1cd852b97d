"""Fit reports and tabular outputs.

Reports are JSON with sorted keys and no timestamps, so identical inputs
give byte-identical files.
"""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from src.estimator.fit import FitResult
from src.formats.atomic import atomic_write_text
from src.formats.traces import FLOAT_FORMAT

logger = logging.getLogger(__name__)

TABLE_FORMATS = ("csv", "json")


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into JSON-friendly values."""
    if isinstance(value, Mapping):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def fit_report(result: FitResult, source: Optional[str] = None) -> Dict[str, Any]:
    """Structured summary of a fit: estimates, sigmas, correlations, γ/Q/F, χ² and branch."""
    report: Dict[str, Any] = {
        "parameters": {
            name: {"estimate": result.estimates[name], "sigma": result.sigmas[name]}
            for name in result.names
        },
        "fixed": dict(result.fixed),
        "correlation": {
            "names": list(result.names),
            "matrix": result.correlation,
        },
        "derived": {
            "gamma_hz": result.gamma_hz,
            "gamma_sigma_hz": result.gamma_sigma_hz,
            "q_factor": result.q_factor,
            "q_sigma": result.q_sigma,
            "finesse": result.finesse,
            "finesse_sigma": result.finesse_sigma,
        },
        "goodness_of_fit": {
            "chi2": result.chi2,
            "chi2_reduced": result.chi2_reduced,
            "dof": result.dof,
            "converged": result.converged,
            "nfev": result.nfev,
        },
        "detuning_branch": {
            "chosen": "negative" if result.branch < 0 else "positive",
            "chi2": {("negative" if sign < 0 else "positive"): chi2 for sign, chi2 in result.branch_chi2.items()},
            "tie": result.tie,
        },
        "masked_intervals_hz": [list(mask) for mask in result.masks],
    }
    if result.linewidth_z is not None:
        report["derived"]["reference_z"] = result.linewidth_z
    if source is not None:
        report["trace"] = source
    return _plain(report)


def dumps_report(report: Mapping[str, Any]) -> str:
    return json.dumps(_plain(report), indent=2, sort_keys=True) + "\n"


def write_report(path: Union[str, Path], report: Mapping[str, Any]) -> Path:
    written = atomic_write_text(path, dumps_report(report))
    logger.info("Wrote report to %s", written)
    return written


def table_text(frame: pd.DataFrame, fmt: str = "csv") -> str:
    if fmt == "csv":
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if fmt == "json":
        records = _plain(frame.to_dict(orient="records"))
        return json.dumps(records, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown table format {fmt!r}; expected one of {TABLE_FORMATS}")


def write_table(path: Union[str, Path], frame: pd.DataFrame, fmt: str = "csv") -> Path:
    """Write a DataFrame as CSV or as a JSON list of records."""
    written = atomic_write_text(path, table_text(frame, fmt))
    logger.info("Wrote %d rows to %s", len(frame), written)
    return written
