#!/usr/bin/env python
"""Repeat synthesize-and-fit over many seeds and summarise linewidth recovery.

For each seed a trace is synthesized from the run configuration and fit
with the configured FitSpec.  The summary reports how often the true γ lies
within two reported sigmas, the 1σ coverage and the median σ_γ.

Usage::

    python scripts/recovery_study.py --seeds 100 --out out/recovery.csv
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Dict, Optional

import pandas as pd
from joblib import Parallel, delayed

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.cavity.ring import linewidth  # noqa: E402
from src.config.load_config import RunConfig, load_run_config  # noqa: E402
from src.config.logging_config import setup_logging  # noqa: E402
from src.errors import CavityProbeError  # noqa: E402
from src.estimator.fit import fit  # noqa: E402
from src.formats.reports import write_table  # noqa: E402
from src.synth.measurement import synthesize_trace  # noqa: E402

logger = logging.getLogger(__name__)


def _one_seed(config: RunConfig, seed: int, true_gamma: float) -> Dict[str, object]:
    trace = synthesize_trace(
        config.cavity.to_cavity(),
        config.detuning.to_detuning(),
        config.squeezing.to_model(),
        config.detection.to_detection(),
        config.measurement.to_measurement(seed=seed),
        config.measurement.grid.frequencies(),
    )
    try:
        result = fit(trace, config.fit_spec())
    except CavityProbeError as exc:
        return {"seed": seed, "gamma_hz": math.nan, "gamma_sigma_hz": math.nan, "chi2_reduced": math.nan, "error": str(exc)}
    return {
        "seed": seed,
        "gamma_hz": result.gamma_hz,
        "gamma_sigma_hz": result.gamma_sigma_hz,
        "chi2_reduced": result.chi2_reduced,
        "error": "",
        "z": (result.gamma_hz - true_gamma) / result.gamma_sigma_hz,
    }


def run_study(config: RunConfig, n_seeds: int, first_seed: int = 0, n_jobs: Optional[int] = 1) -> pd.DataFrame:
    """One row per seed with the fitted γ, its sigma, χ²_red and z-score."""
    true_gamma = linewidth(config.cavity.to_cavity()).exact_hz
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_one_seed)(config, seed, true_gamma) for seed in range(first_seed, first_seed + n_seeds)
    )
    return pd.DataFrame(rows)


def summarise(frame: pd.DataFrame) -> Dict[str, float]:
    ok = frame[frame["error"] == ""]
    z = ok["z"].abs()
    return {
        "runs": int(len(frame)),
        "failed": int(len(frame) - len(ok)),
        "within_2_sigma": int((z <= 2.0).sum()),
        "coverage_1_sigma": float((z <= 1.0).mean()) if len(ok) else math.nan,
        "median_gamma_sigma_hz": float(ok["gamma_sigma_hz"].median()) if len(ok) else math.nan,
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None)
    parser.add_argument("--seeds", type=int, default=100)
    parser.add_argument("--first-seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="out/recovery.csv")
    args = parser.parse_args()

    setup_logging()
    config = load_run_config(args.config)
    frame = run_study(config, args.seeds, args.first_seed, args.jobs)
    write_table(args.out, frame, "csv")
    for key, value in summarise(frame).items():
        print(f"{key}: {value}")


if __name__ == "__main__":
    main()
